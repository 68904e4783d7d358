"""
NSS Toolkit - command line entry point
Trains desk-scale classifiers, builds mutated candidate sets, and selects and
evaluates test inputs by neuron sensitivity and the comparison baselines
"""

import argparse
import json
import logging
import os
import sys
from typing import Dict, List, Optional, Sequence

from dotenv import load_dotenv

from evaluation.bench import measure_greedy_scaling, measure_ordering_scaling, overhead_bench
from evaluation.harness import evaluate_selectors
from evaluation.sweeps import LAYER_SWEEP_K, SWEEP_BUDGET, SWEEP_KS, strength_sweep, sweep_k, sweep_layers
from loaders.bundle_store import BundleFormatError, ModelBundle, has_profile_sidecar, load_model_bundle, save_model_bundle
from loaders.idx_loader import IdxFormatError, LabeledDataset, load_idx
from mutation.candidates import (CandidateSet, dump_mutated_idx, file_sha256, generate_candidates,
                                 load_candidate_log, load_candidates_npz, save_candidate_log)
from mutation.transforms import MUTATION_KINDS, MutationSpec, MutationSpecError
from network.layers import LayerSpec
from network.trainer import TrainingDivergedError, init_weights, retrain_config, train
from selection.baselines import CoverageProfile, kmnc_profile
from selection.nss import SelectionError, resolve_layer, sensitivity_profile
from selection.report import parse_budget
from selection.runner import NEEDS_TRAIN_SET, SELECTOR_NAMES, SelectorInputs, run_selector
from utils.config import ConfigError, RunConfig, load_run_config
from utils.formatters import ReportFormatter, export_report, export_table, export_timings

logger = logging.getLogger('nss_cli')

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_RUNTIME = 2

MODEL_DIR = 'model'
ARCHITECTURES = ('mlp', 'cnn')


class CliParser(argparse.ArgumentParser):
    """ArgumentParser that exits with code 1 (usage on stderr) instead of 2"""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_VALIDATION, f"{self.prog}: error: {message}\n")


def build_architecture(name: str, image_shape: Sequence[int], class_count: int):
    """
    Desk-scale architectures

    mlp: flat input -> dense 128 -> relu -> dense classes
    cnn: conv 8@3x3 -> relu -> pool 2 -> conv 16@3x3 -> relu -> pool 2 -> dense 64 -> relu -> dense classes

    Returns:
        (layers, input_shape)
    """
    c, h, w = image_shape
    if name == 'mlp':
        size = c * h * w
        layers = [LayerSpec.dense(size, 128), LayerSpec('relu'), LayerSpec.dense(128, class_count)]
        return layers, (size,)

    oh, ow = ((h - 2) // 2 - 2) // 2, ((w - 2) // 2 - 2) // 2
    layers = [
        LayerSpec.conv2d(c, 8, (3, 3)), LayerSpec('relu'), LayerSpec.maxpool2d(2),
        LayerSpec.conv2d(8, 16, (3, 3)), LayerSpec('relu'), LayerSpec.maxpool2d(2),
        LayerSpec('flatten'), LayerSpec.dense(16 * oh * ow, 64), LayerSpec('relu'),
        LayerSpec.dense(64, class_count),
    ]
    return layers, (c, h, w)


def _float_list(text: str) -> List[float]:
    return [float(v) for v in text.split(',') if v.strip()]


def _int_list(text: str) -> List[int]:
    return [int(v) for v in text.split(',') if v.strip()]


def _percent_list(text: str) -> List[float]:
    """'5,10,15,20' -> [0.05, 0.1, 0.15, 0.2]"""
    return [round(float(v) / 100.0, 6) for v in text.split(',') if v.strip()]


def _selector_list(text: str) -> List[str]:
    names = [v.strip() for v in text.split(',') if v.strip()]
    for name in names:
        if name not in SELECTOR_NAMES:
            raise argparse.ArgumentTypeError(f"unknown selector {name!r} (choose from {', '.join(SELECTOR_NAMES)})")
    return names


def build_parser() -> argparse.ArgumentParser:
    common = CliParser(add_help=False)
    common.add_argument('--config', help='KEY=VALUE run config with dotted keys (flags override it)')
    common.add_argument('--output-dir', help='Artifact directory (default: $NSS_OUTPUT_DIR or ./nss_output)')
    common.add_argument('--workers', type=int, help='Worker thread cap (default: all cores; never changes results)')
    common.add_argument('--seed', type=int, help='Master seed')
    common.add_argument('--verbose', action='store_true', help='Debug logging')

    data = CliParser(add_help=False)
    data.add_argument('--images', help='IDX images the candidates are built from')
    data.add_argument('--labels', help='IDX labels matching --images')

    model = CliParser(add_help=False)
    model.add_argument('--bundle', help='Model bundle directory')
    model.add_argument('--candidates', help='Candidate log (.json, needs --images/--labels) or materialized set (.npz)')
    model.add_argument('--layer', help="Tap layer index or 'last-encoder'")

    training = CliParser(add_help=False)
    training.add_argument('--train-images', help='IDX training images')
    training.add_argument('--train-labels', help='IDX training labels')

    parser = CliParser(prog='nss_cli.py', description='Neuron-sensitivity guided test selection toolkit')
    sub = parser.add_subparsers(dest='command', parser_class=CliParser)
    sub.required = True

    p = sub.add_parser('train', parents=[common, training], help='Train a desk-scale classifier')
    p.add_argument('--test-images', help='IDX test images scored after every epoch')
    p.add_argument('--test-labels', help='IDX test labels')
    p.add_argument('--arch', choices=ARCHITECTURES, default='mlp')
    p.add_argument('--subset', type=int, help='Train on a seeded subset of this many images')
    p.add_argument('--epochs', type=int)
    p.add_argument('--batch-size', type=int)
    p.add_argument('--lr', type=float)
    p.add_argument('--momentum', type=float)

    p = sub.add_parser('mutate', parents=[common, data], help='Pair every image with one benign mutation')
    p.add_argument('--fixed', help=f"Apply one mutation to every image, KIND:VALUE (kinds: {', '.join(MUTATION_KINDS)})")
    p.add_argument('--dump-idx', action='store_true', help='Also write the mutated images as IDX files')

    p = sub.add_parser('identify', parents=[common, data, model], help='Identify sensitive neurons')
    p.add_argument('--k', type=float, help='Fraction of neurons kept as sensitive')

    p = sub.add_parser('select', parents=[common, data, model, training], help='Select test inputs')
    p.add_argument('--selector', choices=SELECTOR_NAMES)
    p.add_argument('--budget', help="Fraction ('0.05'), percentage ('5%%') or count ('50')")
    p.add_argument('--k', type=float)

    p = sub.add_parser('eval', parents=[common, data, model, training], help='FDR / FTCR of several selectors')
    p.add_argument('--selectors', type=_selector_list, default=list(SELECTOR_NAMES[:5]))
    p.add_argument('--budgets', type=_percent_list, default=[0.05, 0.10, 0.15, 0.20], help='Percentages, e.g. 5,10,15,20')
    p.add_argument('--k', type=float)
    p.add_argument('--retrain', action='store_true', help='Also run the retraining experiment per budget')
    p.add_argument('--test-images', help='IDX test images for --retrain')
    p.add_argument('--test-labels', help='IDX test labels for --retrain')

    p = sub.add_parser('bench', parents=[common, data, model, training], help='Selection overhead')
    p.add_argument('--selectors', type=_selector_list, default=list(SELECTOR_NAMES))
    p.add_argument('--budgets', type=_percent_list, default=[0.05, 0.10, 0.15, 0.20])
    p.add_argument('--k', type=float)
    p.add_argument('--scaling', type=int, help='Also probe ordering / greedy scaling at this n')

    p = sub.add_parser('sweep', parents=[common, data, model], help='Sensitive-neuron ratio / layer / strength sweeps')
    p.add_argument('--kind', choices=('k', 'layers', 'strength'), default='k')
    p.add_argument('--ks', type=_percent_list, help='Percentages for --kind k (default 1,5,10,20,100)')
    p.add_argument('--layers', type=_int_list, help='Tap layers for --kind layers')
    p.add_argument('--budget', help='Selection budget (default 20%%)')
    p.add_argument('--mutation', choices=MUTATION_KINDS, help='Mutation for --kind strength')
    p.add_argument('--values', type=_float_list, help='Mutation strengths for --kind strength')
    p.add_argument('--k', type=float)

    return parser


def overrides_from_args(args: argparse.Namespace) -> Dict[str, object]:
    """Map flags onto dotted config keys (None = not given)"""
    get = lambda name: getattr(args, name, None)
    overrides = {
        'paths.output_dir': get('output_dir'),
        'paths.bundle': get('bundle'),
        'paths.images': get('images'),
        'paths.labels': get('labels'),
        'paths.train_images': get('train_images'),
        'paths.train_labels': get('train_labels'),
        'paths.test_images': get('test_images'),
        'paths.test_labels': get('test_labels'),
        'paths.candidates': get('candidates'),
        'workers': get('workers'),
        'seed': get('seed'),
        'selector': get('selector'),
        'selection.k': get('k'),
        'selection.layer': get('layer'),
        'train.epochs': get('epochs'),
        'train.batch_size': get('batch_size'),
        'train.lr': get('lr'),
        'train.momentum': get('momentum'),
    }
    if get('budget') is not None:
        try:
            overrides['selection.budget'] = parse_budget(get('budget'))
        except ValueError as e:
            raise ConfigError(f"invalid budget {get('budget')!r}") from e
    return overrides


class Session:
    """Loads inputs named by a RunConfig and records their hashes for provenance"""

    def __init__(self, command: str, config: RunConfig):
        self.command = command
        self.config = config
        self.inputs: Dict[str, str] = {}
        os.makedirs(config.paths.output_dir, exist_ok=True)

    def out(self, name: str) -> str:
        return os.path.join(self.config.paths.output_dir, name)

    def record(self, path: str) -> None:
        if os.path.isdir(path):
            for name in sorted(os.listdir(path)):
                self.record(os.path.join(path, name))
        else:
            self.inputs[path] = file_sha256(path)

    def dataset(self, images_key: str, labels_key: str, class_count: Optional[int] = None) -> LabeledDataset:
        self.config.require_paths([images_key, labels_key])
        images, labels = getattr(self.config.paths, images_key), getattr(self.config.paths, labels_key)
        self.record(images)
        self.record(labels)
        return load_idx(images, labels, class_count)

    def optional_dataset(self, images_key: str, labels_key: str,
                         class_count: Optional[int] = None) -> Optional[LabeledDataset]:
        if getattr(self.config.paths, images_key) and getattr(self.config.paths, labels_key):
            return self.dataset(images_key, labels_key, class_count)
        return None

    def model(self) -> ModelBundle:
        self.config.require_paths(['bundle'])
        self.record(self.config.paths.bundle)
        return load_model_bundle(self.config.paths.bundle)

    def candidates(self) -> CandidateSet:
        self.config.require_paths(['candidates'])
        path = self.config.paths.candidates
        self.record(path)
        if path.endswith('.npz'):
            return load_candidates_npz(path)
        self.config.require_paths(['images', 'labels'])
        self.record(self.config.paths.images)
        self.record(self.config.paths.labels)
        return load_candidate_log(path, self.config.paths.images, self.config.paths.labels, self.config.workers)

    def selector_inputs(self, need_train: bool = False) -> SelectorInputs:
        model = self.model()
        candidates = self.candidates()
        train_set = self.optional_dataset('train_images', 'train_labels', model.class_count)
        profile = None
        if has_profile_sidecar(self.config.paths.bundle):
            profile = CoverageProfile.load(self.config.paths.bundle)
        if need_train and train_set is None and profile is None:
            raise ConfigError("this selector needs --train-images/--train-labels")
        return SelectorInputs(model, candidates, self.config.selection, self.config.baseline,
                              train_set, profile, self.config.workers)

    def write_provenance(self) -> str:
        """Input hashes and the resolved config; no timestamps, so reruns are byte-identical"""
        path = self.out('provenance.json')
        data = {
            'command': self.command,
            'inputs': dict(sorted(self.inputs.items())),
            'config': self.config.to_dict(),
        }
        with open(path, 'w', encoding='utf-8') as fh:
            fh.write(json.dumps(data, indent=2, sort_keys=True) + '\n')
        return path


def cmd_train(session: Session, args: argparse.Namespace) -> None:
    cfg = session.config
    train_set = session.dataset('train_images', 'train_labels')
    if args.subset:
        train_set = train_set.sample(args.subset, cfg.seed)
    test_set = session.optional_dataset('test_images', 'test_labels', train_set.class_count)

    layers, input_shape = build_architecture(args.arch, train_set.image_shape, train_set.class_count)
    bundle = ModelBundle(layers, input_shape, train_set.class_count, init_weights(layers, input_shape, cfg.seed))
    eval_set = (bundle.as_input(test_set.images), test_set.labels) if test_set is not None else None

    result = train(layers, bundle.weights, bundle.as_input(train_set.images), train_set.labels, cfg.train, eval_set)
    bundle = bundle.with_weights(result.weights)

    model_dir = session.out(MODEL_DIR)
    save_model_bundle(bundle, model_dir)
    profile = kmnc_profile(bundle, train_set, cfg.baseline.kmnc_bins, cfg.selection.layer, cfg.workers)
    profile.save(model_dir)
    export_table(result.history, session.out('train_history.json'))
    logger.info(f"Model saved to {model_dir}")


def cmd_mutate(session: Session, args: argparse.Namespace) -> None:
    cfg = session.config
    fixed = MutationSpec.parse(args.fixed) if args.fixed else None
    dataset = session.dataset('images', 'labels')
    candidates = generate_candidates(dataset, cfg.seed, fixed=fixed, workers=cfg.workers)
    save_candidate_log(candidates, session.out('candidates.json'), cfg.paths.images, cfg.paths.labels)
    if args.dump_idx:
        dump_mutated_idx(candidates, session.out('mutated-images.idx'), session.out('mutated-labels.idx'))


def cmd_identify(session: Session, args: argparse.Namespace) -> None:
    cfg = session.config
    model = session.model()
    candidates = session.candidates()
    layer = resolve_layer(model, cfg.selection.layer)
    profile = sensitivity_profile(model, candidates, layer, cfg.workers)
    top = profile.top(cfg.selection.k)
    rows = [{'rank': rank, 'layer': layer, 'index': int(i), 'sensitivity': float(profile.values[i])}
            for rank, i in enumerate(top, 1)]
    export_table(rows, session.out('sensitive.json'))
    logger.info(f"{len(rows)} of {len(profile)} neurons at layer {layer} are sensitive")


def cmd_select(session: Session, args: argparse.Namespace) -> None:
    cfg = session.config
    inputs = session.selector_inputs(need_train=cfg.selector in NEEDS_TRAIN_SET)
    report = run_selector(cfg.selector, inputs)
    path = session.out(f"selection_{cfg.selector}.json")
    export_report(report, path)
    export_timings(report.timings, path)
    logger.info(ReportFormatter.summary(report))


def cmd_eval(session: Session, args: argparse.Namespace) -> None:
    cfg = session.config
    need_train = args.retrain or any(name in NEEDS_TRAIN_SET for name in args.selectors)
    inputs = session.selector_inputs(need_train=need_train)
    test_set, schedule = None, None
    if args.retrain:
        if inputs.train_set is None:
            raise ConfigError("--retrain needs --train-images/--train-labels")
        test_set = session.dataset('test_images', 'test_labels', inputs.model.class_count)
        schedule = retrain_config(cfg.seed)
    report = evaluate_selectors(inputs, args.selectors, args.budgets, test_set, schedule)
    path = session.out('eval.json')
    export_report(report, path)
    export_timings(report.timings, path)
    logger.info('\n' + ReportFormatter.summary(report))


def cmd_bench(session: Session, args: argparse.Namespace) -> None:
    inputs = session.selector_inputs(need_train=any(name in NEEDS_TRAIN_SET for name in args.selectors))
    rows = overhead_bench(inputs, args.selectors, args.budgets)
    export_table(rows, session.out('bench.json'))
    if args.scaling:
        n = args.scaling
        t_n, t_2n = measure_ordering_scaling(n, session.config.seed)
        g_n, g_2n = measure_greedy_scaling(max(1, n // 50), neurons=64, seed=session.config.seed)
        scaling = [
            {'phase': 'nss_ordering', 'n': n, 'seconds_n': t_n, 'seconds_2n': t_2n, 'ratio': t_2n / max(t_n, 1e-12)},
            {'phase': 'kmnc_greedy', 'n': max(1, n // 50), 'seconds_n': g_n, 'seconds_2n': g_2n,
             'ratio': g_2n / max(g_n, 1e-12)},
        ]
        export_table(scaling, session.out('bench_scaling.json'))


def cmd_sweep(session: Session, args: argparse.Namespace) -> None:
    cfg = session.config
    model = session.model()
    # sweeps have their own defaults for keys neither the config file nor a flag set
    budget = cfg.selection.budget if 'selection.budget' in cfg.explicit else SWEEP_BUDGET
    if args.kind == 'strength':
        if not args.mutation or not args.values:
            raise ConfigError("--kind strength needs --mutation and --values")
        dataset = session.dataset('images', 'labels', model.class_count)
        rows = strength_sweep(model, dataset, args.mutation, args.values, cfg.selection.k,
                              cfg.selection.layer, cfg.seed, cfg.workers)
        export_table(rows, session.out('sweep_strength.json'))
        return

    candidates = session.candidates()
    if args.kind == 'k':
        ks = args.ks or list(SWEEP_KS)
        rows = sweep_k(model, candidates, ks, budget, cfg.selection.layer, cfg.workers)
    else:
        k = cfg.selection.k if 'selection.k' in cfg.explicit else LAYER_SWEEP_K
        rows = sweep_layers(model, candidates, args.layers, k, budget, cfg.workers)
    export_table(rows, session.out(f"sweep_{args.kind}.json"))


COMMANDS = {
    'train': cmd_train,
    'mutate': cmd_mutate,
    'identify': cmd_identify,
    'select': cmd_select,
    'eval': cmd_eval,
    'bench': cmd_bench,
    'sweep': cmd_sweep,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Run one subcommand; returns the process exit code"""
    parser = build_parser()
    args = parser.parse_args(argv)

    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format='%(asctime)s - %(name)s - %(levelname)s - %(message)s'
    )
    load_dotenv()

    try:
        config = load_run_config(args.config, overrides_from_args(args))
        session = Session(args.command, config)
        logger.info(f"🚀 Running {args.command} (seed={config.seed}, output={config.paths.output_dir})")
        COMMANDS[args.command](session, args)
        session.write_provenance()
        logger.info(f"✅ {args.command} finished")
        return EXIT_OK
    except (ConfigError, MutationSpecError, argparse.ArgumentTypeError) as e:
        parser.print_usage(sys.stderr)
        logger.error(f"❌ Invalid configuration: {e}")
        return EXIT_VALIDATION
    except KeyboardInterrupt:
        logger.info("👋 Stopped by user")
        return EXIT_RUNTIME
    except (IdxFormatError, BundleFormatError, SelectionError, TrainingDivergedError, OSError, ValueError) as e:
        logger.error(f"❌ {args.command} failed: {e}")
        return EXIT_RUNTIME
    except Exception as e:
        logger.exception(f"❌ Fatal error in {args.command}: {e}")
        return EXIT_RUNTIME


if __name__ == '__main__':
    sys.exit(main())
