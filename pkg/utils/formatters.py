"""
Report formatting and export: JSON documents plus companion CSV tables
"""

import csv
import io
import json
import logging
import os
from typing import Dict, List, Optional, Sequence, Union

from evaluation.metrics import EvalReport
from selection.report import SelectionReport

logger = logging.getLogger(__name__)

Budget = Union[int, float]


class ReportFormatter:
    """Turn selection and evaluation results into byte-stable text"""

    @staticmethod
    def percent(value: Optional[float]) -> str:
        """Ratio in [0, 1] as a fixed two-decimal percentage ('' for None)"""
        if value is None:
            return ''
        return f"{value * 100:.2f}"

    @staticmethod
    def budget_label(budget: Budget) -> str:
        """'5.00%' for fractions, '50' for absolute counts"""
        if isinstance(budget, float):
            return f"{budget * 100:.2f}%"
        return str(budget)

    @staticmethod
    def csv_text(header: Sequence[str], rows: Sequence[Sequence]) -> str:
        buffer = io.StringIO()
        writer = csv.writer(buffer, lineterminator='\n')
        writer.writerow(header)
        for row in rows:
            writer.writerow(['' if v is None else v for v in row])
        return buffer.getvalue()

    @staticmethod
    def json_text(data: Dict) -> str:
        return json.dumps(data, indent=2) + '\n'

    @staticmethod
    def selection_document(report: SelectionReport) -> Dict:
        return report.to_dict()

    @staticmethod
    def selection_rows(report: SelectionReport) -> List[List]:
        """One row per selected candidate: rank, index, score, label, prediction"""
        rows = []
        for rank, index in enumerate(report.selected, 1):
            score = report.score_of(index)
            rows.append([
                rank,
                index,
                '' if score is None else repr(float(score)),
                '' if report.labels is None else report.labels[index],
                '' if report.predictions is None else report.predictions[index],
            ])
        return rows

    @staticmethod
    def eval_document(report: EvalReport) -> Dict:
        fmt = ReportFormatter
        ftcr = {}
        for name in report.selectors:
            curve = report.ftcr.get(name)
            if curve is None:
                continue
            if curve.no_fault:
                ftcr[name] = {'status': 'no-fault'}
            else:
                ftcr[name] = {
                    'auc': f"{curve.auc:.2f}",
                    'curve': {fmt.budget_label(b): fmt.percent(r) for b, r in zip(curve.budgets, curve.rates)},
                }
        document = {
            'budgets': [fmt.budget_label(b) for b in report.budgets],
            'selectors': list(report.selectors),
            'fdr': {
                name: {fmt.budget_label(b): fmt.percent(report.fdr[name].get(b)) for b in report.budgets}
                for name in report.selectors if name in report.fdr
            },
            'ftcr': ftcr,
        }
        if report.retrain:
            document['baseline_accuracy'] = fmt.percent(report.baseline_accuracy)
            document['retrain_delta'] = {
                name: {fmt.budget_label(b): fmt.percent(report.retrain[name].get(b)) for b in report.budgets}
                for name in report.selectors if name in report.retrain
            }
        document['config'] = report.config
        return document

    @staticmethod
    def summary(report: Union[SelectionReport, EvalReport]) -> str:
        """Short human-readable summary for the log"""
        if isinstance(report, SelectionReport):
            head = ', '.join(str(i) for i in report.selected[:10])
            more = ' ...' if report.budget > 10 else ''
            text = f"{report.selector}: selected {report.budget}/{report.candidate_count} [{head}{more}]"
            if report.coverage is not None:
                text += f" coverage={ReportFormatter.percent(report.coverage)}%"
            return text

        lines = []
        for name in report.selectors:
            fdrs = ' '.join(
                f"{ReportFormatter.budget_label(b)}:{ReportFormatter.percent(report.fdr.get(name, {}).get(b))}"
                for b in report.budgets
            )
            curve = report.ftcr.get(name)
            auc = 'no-fault' if curve is None or curve.no_fault else f"{curve.auc:.2f}"
            lines.append(f"{name}: FDR {fdrs} | FTCR-AUC {auc}")
        return '\n'.join(lines)


def _write(path: str, text: str) -> None:
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    with open(path, 'w', encoding='utf-8', newline='') as fh:
        fh.write(text)


def companion_path(path: str, suffix: str) -> str:
    stem, _ = os.path.splitext(path)
    return stem + suffix


def export_report(report: Union[SelectionReport, EvalReport], path: str) -> List[str]:
    """
    Write a report as JSON plus companion CSV file(s)

    Selection: ranked indices and scores in JSON, selected rows in <stem>.csv.
    Evaluation: metrics in JSON, the FDR table (budget rows by selector
    columns) in <stem>.csv, the FTCR curve in <stem>.ftcr.csv and retraining
    deltas in <stem>.retrain.csv. Timings are not part of either file.

    Returns:
        Paths written
    """
    fmt = ReportFormatter
    written = [path, companion_path(path, '.csv')]

    if isinstance(report, SelectionReport):
        _write(path, fmt.json_text(fmt.selection_document(report)))
        header = ['rank', 'index', 'score', 'label', 'prediction']
        _write(written[1], fmt.csv_text(header, fmt.selection_rows(report)))
    else:
        _write(path, fmt.json_text(fmt.eval_document(report)))
        fdr_rows = [[fmt.budget_label(row[0])] + [fmt.percent(v) for v in row[1:]]
                    for row in report.table(report.fdr)]
        _write(written[1], fmt.csv_text(['budget'] + list(report.selectors), fdr_rows))

        ftcr_rows = [[name, 'no-fault' if b is None else fmt.budget_label(b), fmt.percent(r)]
                     for name, b, r in report.ftcr_rows()]
        ftcr_path = companion_path(path, '.ftcr.csv')
        _write(ftcr_path, fmt.csv_text(['selector', 'budget', 'rate'], ftcr_rows))
        written.append(ftcr_path)

        if report.retrain:
            retrain_rows = [[fmt.budget_label(row[0])] + [fmt.percent(v) for v in row[1:]]
                            for row in report.table(report.retrain)]
            retrain_path = companion_path(path, '.retrain.csv')
            _write(retrain_path, fmt.csv_text(['budget'] + list(report.selectors), retrain_rows))
            written.append(retrain_path)

    logger.info(f"Exported report to {', '.join(written)}")
    return written


def export_table(rows: Sequence[Dict], path: str) -> List[str]:
    """Write a list of flat dicts as JSON rows and a CSV with the same columns"""
    header = list(rows[0].keys()) if rows else []
    _write(path, ReportFormatter.json_text({'rows': list(rows)}))
    csv_path = companion_path(path, '.csv')
    _write(csv_path, ReportFormatter.csv_text(header, [[row.get(k) for k in header] for row in rows]))
    return [path, csv_path]


def export_timings(timings: Dict, path: str) -> str:
    """Timing sidecar <stem>.timings.json, kept apart from the deterministic artifacts"""
    timing_path = companion_path(path, '.timings.json')
    _write(timing_path, json.dumps(timings, indent=2, sort_keys=True) + '\n')
    return timing_path
