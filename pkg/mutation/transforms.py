"""
Benign image mutations: shift, rotation, scale, shear, contrast, brightness, blur
"""

import logging
import math
from dataclasses import dataclass
from typing import Dict, Optional, Tuple

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy import ndimage

logger = logging.getLogger(__name__)

MUTATION_KINDS = ('shift', 'rotation', 'scale', 'shear', 'contrast', 'brightness', 'blur')
GEOMETRIC_KINDS = ('shift', 'rotation', 'scale', 'shear')
BLUR_SIZES = (2, 3, 5, 7)

# kind -> (parameter count, sign count, inclusive range)
PARAM_RANGES: Dict[str, Tuple[int, int, Tuple[float, float]]] = {
    'shift': (2, 2, (0.05, 0.15)),
    'rotation': (1, 1, (5.0, 25.0)),
    'scale': (1, 0, (0.8, 1.2)),
    'shear': (1, 1, (15.0, 30.0)),
    'contrast': (1, 0, (0.5, 1.5)),
    'brightness': (1, 0, (0.5, 1.5)),
    'blur': (1, 0, (2, 7)),
}


class MutationSpecError(ValueError):
    """Raised for an unknown mutation kind or an out-of-range parameter"""


@dataclass(frozen=True)
class MutationSpec:
    """
    One benign transformation with its parameters

    params holds (sx, sy) fractions for shift, degrees for rotation and
    shear, the ratio for scale, the gain for contrast and brightness and
    the kernel size for blur. signs holds one direction per parameter for
    shift, one for rotation and shear, and nothing for the rest. An empty
    signs tuple on a signed kind means "draw at mutation time".
    """

    kind: str
    params: Tuple[float, ...]
    signs: Tuple[int, ...] = ()

    def validate(self) -> None:
        if self.kind not in PARAM_RANGES:
            raise MutationSpecError(f"Unknown mutation kind: {self.kind!r} (expected one of {', '.join(MUTATION_KINDS)})")
        count, sign_count, (low, high) = PARAM_RANGES[self.kind]
        if len(self.params) != count:
            raise MutationSpecError(f"{self.kind} takes {count} parameter(s), got {len(self.params)}")
        if self.signs and len(self.signs) != sign_count:
            raise MutationSpecError(f"{self.kind} takes {sign_count} sign(s), got {len(self.signs)}")
        if any(s not in (-1, 1) for s in self.signs):
            raise MutationSpecError(f"signs must be -1 or +1, got {list(self.signs)}")

        if self.kind == 'blur':
            if self.params[0] not in BLUR_SIZES:
                raise MutationSpecError(f"blur kernel size must be one of {list(BLUR_SIZES)}, got {self.params[0]}")
            return
        for value in self.params:
            if not (math.isfinite(value) and low <= value <= high):
                raise MutationSpecError(f"{self.kind} parameter {value} outside [{low}, {high}]")

    @property
    def needs_signs(self) -> bool:
        return PARAM_RANGES[self.kind][1] > 0 and not self.signs

    def with_signs(self, signs: Tuple[int, ...]) -> 'MutationSpec':
        return MutationSpec(self.kind, self.params, tuple(int(s) for s in signs))

    def to_dict(self) -> Dict:
        if self.kind == 'blur':
            params = [int(self.params[0])]
        else:
            params = [float(p) for p in self.params]
        return {'kind': self.kind, 'params': params, 'signs': list(self.signs)}

    @classmethod
    def from_dict(cls, data: Dict) -> 'MutationSpec':
        try:
            spec = cls(str(data['kind']), tuple(data['params']), tuple(int(s) for s in data.get('signs', ())))
        except (KeyError, TypeError) as e:
            raise MutationSpecError(f"invalid mutation record {data!r}: {e}") from e
        spec.validate()
        return spec

    @classmethod
    def parse(cls, text: str) -> 'MutationSpec':
        """
        Parse a fixed mutation such as 'scale:0.8', 'shift:0.1,0.05' or 'blur:2'

        Signs are left open and drawn per candidate.
        """
        kind, sep, values = text.partition(':')
        if not sep or not values:
            raise MutationSpecError(f"expected KIND:VALUE[,VALUE], got {text!r}")
        try:
            if kind.strip() == 'blur':
                params = tuple(int(v) for v in values.split(','))
            else:
                params = tuple(float(v) for v in values.split(','))
        except ValueError as e:
            raise MutationSpecError(f"non-numeric parameter in {text!r}") from e
        spec = cls(kind.strip(), params)
        spec.validate()
        return spec

    def __str__(self) -> str:
        values = ','.join(str(p) for p in self.to_dict()['params'])
        signs = ''.join('+' if s > 0 else '-' for s in self.signs)
        return f"{self.kind}:{values}" + (f" [{signs}]" if signs else '')


def _inverse_map(spec: MutationSpec, h: int, w: int) -> Tuple[np.ndarray, np.ndarray]:
    """Output -> input coordinate map (matrix, offset) for ndimage.affine_transform"""
    center = np.array([(h - 1) / 2.0, (w - 1) / 2.0])

    if spec.kind == 'shift':
        sx, sy = spec.params
        dx = sx * w * spec.signs[0]
        dy = sy * h * spec.signs[1]
        return np.eye(2), -np.array([dy, dx])

    if spec.kind == 'rotation':
        theta = math.radians(spec.params[0] * spec.signs[0])
        cos, sin = math.cos(theta), math.sin(theta)
        # forward (row, col) rotation is [[cos, -sin], [sin, cos]]; its inverse is the transpose
        matrix = np.array([[cos, sin], [-sin, cos]])
    elif spec.kind == 'scale':
        matrix = np.eye(2) / spec.params[0]
    elif spec.kind == 'shear':
        t = math.tan(math.radians(spec.params[0])) * spec.signs[0]
        matrix = np.array([[1.0, 0.0], [-t, 1.0]])
    else:
        raise MutationSpecError(f"{spec.kind} is not a geometric mutation")

    return matrix, center - matrix @ center


def draw_signs(spec: MutationSpec, rng: np.random.Generator) -> MutationSpec:
    """Fill in uniformly drawn directions for a signed kind"""
    count = PARAM_RANGES[spec.kind][1]
    return spec.with_signs(tuple(int(s) for s in rng.choice((-1, 1), size=count)))


def box_blur(channel: np.ndarray, size: int) -> np.ndarray:
    """
    Mean filter over size x size windows with edge-replicate padding

    The window of pixel (i, j) spans rows i-(size-1)//2 .. i+size//2, so an
    even size extends down and right of its anchor.
    """
    before, after = (size - 1) // 2, size // 2
    padded = np.pad(channel, ((before, after), (before, after)), mode='edge')
    return sliding_window_view(padded, (size, size)).mean(axis=(2, 3))


def mutate(image: np.ndarray, spec: MutationSpec, rng: Optional[np.random.Generator] = None) -> np.ndarray:
    """
    Apply one benign mutation to an image

    Args:
        image: Pixels [c, h, w] in [0, 1]
        spec: Mutation to apply
        rng: Generator used only to draw missing signs

    Returns:
        float32 image of the same shape, clamped to [0, 1]

    Raises:
        MutationSpecError: if the spec is invalid
        ValueError: if the image is not [c, h, w] in [0, 1]
    """
    spec.validate()
    image = np.asarray(image)
    if image.ndim != 3:
        raise ValueError(f"image must be [c, h, w], got shape {list(image.shape)}")
    if image.size and (image.min() < 0.0 or image.max() > 1.0):
        raise ValueError("image pixels must lie in [0, 1]")

    if spec.needs_signs:
        if rng is None:
            raise MutationSpecError(f"{spec.kind} has no signs and no generator to draw them")
        spec = draw_signs(spec, rng)

    x = image.astype(np.float64)
    if spec.kind in GEOMETRIC_KINDS:
        matrix, offset = _inverse_map(spec, x.shape[1], x.shape[2])
        out = np.stack([
            ndimage.affine_transform(channel, matrix, offset=offset, order=1, mode='constant', cval=0.0)
            for channel in x
        ])
    elif spec.kind == 'contrast':
        out = spec.params[0] * (x - 0.5) + 0.5
    elif spec.kind == 'brightness':
        out = spec.params[0] * x
    else:
        out = np.stack([box_blur(channel, int(spec.params[0])) for channel in x])

    return np.clip(out, 0.0, 1.0).astype(np.float32)


def sample_spec(rng: np.random.Generator) -> MutationSpec:
    """
    Draw a random mutation: kind uniform over the seven, parameters uniform
    over their ranges, directions uniform over {-1, +1}
    """
    kind = MUTATION_KINDS[int(rng.integers(len(MUTATION_KINDS)))]
    count, sign_count, (low, high) = PARAM_RANGES[kind]
    if kind == 'blur':
        params = (int(rng.choice(BLUR_SIZES)),)
    else:
        params = tuple(float(v) for v in rng.uniform(low, high, size=count))
    signs = tuple(int(s) for s in rng.choice((-1, 1), size=sign_count))
    return MutationSpec(kind, params, signs)
