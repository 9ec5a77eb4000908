"""
layers.py

Convolution and fully-connected layer descriptors, the named workload catalog,
and the line-oriented descriptor file format:

    conv name=ResNet50-2 n=32 k=64 c=64 x=56 y=56 r=3 s=3 stride=1 pad=1
    fc name=DLRM-1 n=512 nin=1024 non=1024

stride and pad are optional on conv lines (stride 1, pad r//2).
"""

import logging
from dataclasses import dataclass, replace

from tilearray.core.ioc import SingleObjectContainer
from tilearray.errors import LayerError, DescriptorSyntaxError


@dataclass(frozen=True)
class ConvLayer:
    name: str
    n: int
    k: int
    c: int
    x: int
    y: int
    r: int
    s: int
    stride: int = 1
    pad: int = None

    def __post_init__(self):
        if self.pad is None:
            object.__setattr__(self, 'pad', self.r // 2)
        for field_name in ('n', 'k', 'c', 'x', 'y', 'r', 's', 'stride'):
            value = getattr(self, field_name)
            if not isinstance(value, int) or value < 1:
                raise LayerError("%s: %s must be a positive integer, got %r" % (self.name, field_name, value))
        if not isinstance(self.pad, int) or self.pad < 0:
            raise LayerError("%s: pad must be a non-negative integer, got %r" % (self.name, self.pad))
        self.output_dims()

    def _output(self, size, window, axis):
        span = size - window + 2 * self.pad
        if span < 0 or span % self.stride:
            raise LayerError("%s: (%s=%d - %d + 2*pad=%d) is not a multiple of stride %d; adjust stride or padding"
                             % (self.name, axis, size, window, self.pad, self.stride))
        return span // self.stride + 1

    def output_dims(self):
        """
        :return: (output x, output y)
        """
        return self._output(self.x, self.r, 'x'), self._output(self.y, self.s, 'y')

    @property
    def kind(self):
        return 'conv'


@dataclass(frozen=True)
class FcLayer:
    name: str
    n: int
    nin: int
    non: int

    def __post_init__(self):
        for field_name in ('n', 'nin', 'non'):
            value = getattr(self, field_name)
            if not isinstance(value, int) or value < 1:
                raise LayerError("%s: %s must be a positive integer, got %r" % (self.name, field_name, value))

    @property
    def kind(self):
        return 'fc'


def with_batch(layer, n):
    """
    Copy of a layer at another batch size, name unchanged
    """
    return replace(layer, n=n)


def describe(layer):
    if isinstance(layer, ConvLayer):
        return "conv name=%s n=%d k=%d c=%d x=%d y=%d r=%d s=%d stride=%d pad=%d" % (
            layer.name, layer.n, layer.k, layer.c, layer.x, layer.y, layer.r, layer.s, layer.stride, layer.pad)
    return "fc name=%s n=%d nin=%d non=%d" % (layer.name, layer.n, layer.nin, layer.non)


# Layers of the evaluation workloads
EVALUATION_LAYERS = (
    ConvLayer('ResNet50-1', n=32, k=64, c=64, x=56, y=56, r=1, s=1),
    ConvLayer('ResNet50-2', n=32, k=64, c=64, x=56, y=56, r=3, s=3),
    ConvLayer('ResNet50-3', n=32, k=512, c=1024, x=14, y=14, r=1, s=1),
    FcLayer('DLRM-1', n=512, nin=1024, non=1024),
    FcLayer('DLRM-2', n=512, nin=1024, non=64),
    FcLayer('DLRM-3', n=512, nin=2048, non=2048),
    FcLayer('BERT-1', n=256, nin=768, non=768),
    FcLayer('BERT-2', n=256, nin=3072, non=768),
    FcLayer('BERT-3', n=256, nin=768, non=3072),
)


def default_catalog():
    """
    A fresh layer container holding the evaluation workloads
    :return: SingleObjectContainer keyed by layer name
    """
    catalog = SingleObjectContainer((ConvLayer, FcLayer))
    for layer in EVALUATION_LAYERS:
        catalog.register(layer.name, layer)
    return catalog


def register_layers(catalog, layers, replace_existing=False):
    for layer in layers:
        if layer.name in catalog and not replace_existing:
            raise LayerError("layer '%s' is already defined" % layer.name)
        catalog.register(layer.name, layer, replace=replace_existing)
        logging.debug("registered layer %s", describe(layer))
    return catalog


_CONV_FIELDS = ('n', 'k', 'c', 'x', 'y', 'r', 's')
_CONV_OPTIONAL = ('stride', 'pad')
_FC_FIELDS = ('n', 'nin', 'non')


def _fields(tokens, line_no):
    fields = {}
    for token in tokens:
        key, sep, value = token.partition('=')
        if not sep or not key or not value:
            raise DescriptorSyntaxError(line_no, "expected key=value, got '%s'" % token)
        if key in fields:
            raise DescriptorSyntaxError(line_no, "duplicate field '%s'" % key)
        fields[key] = value
    return fields


def _numbers(fields, required, optional, line_no):
    unknown = sorted(set(fields) - set(required) - set(optional) - {'name'})
    if unknown:
        raise DescriptorSyntaxError(line_no, "unknown field(s): " + ", ".join(unknown))
    missing = [k for k in required if k not in fields]
    if missing:
        raise DescriptorSyntaxError(line_no, "missing field(s): " + ", ".join(missing))
    values = {}
    for key in required + optional:
        if key not in fields:
            continue
        try:
            values[key] = int(fields[key])
        except ValueError:
            raise DescriptorSyntaxError(line_no, "field '%s' is not an integer: '%s'" % (key, fields[key]))
    return values


def parse_layer_file(text):
    """
    Parse a layer descriptor file
    :param text: file contents; blank lines and '#' comments are ignored
    :return: list of ConvLayer / FcLayer in file order
    :raises DescriptorSyntaxError: carrying the 1-based line number
    """
    layers = []
    names = set()
    for line_no, raw in enumerate(text.splitlines(), start=1):
        tokens = raw.split('#', 1)[0].split()
        if not tokens:
            continue
        kind = tokens[0].lower()
        fields = _fields(tokens[1:], line_no)
        name = fields.get('name')
        if not name:
            raise DescriptorSyntaxError(line_no, "layer without a name")
        if name in names:
            raise DescriptorSyntaxError(line_no, "duplicate layer name '%s'" % name)
        try:
            if kind == 'conv':
                layer = ConvLayer(name, **_numbers(fields, _CONV_FIELDS, _CONV_OPTIONAL, line_no))
            elif kind == 'fc':
                layer = FcLayer(name, **_numbers(fields, _FC_FIELDS, (), line_no))
            else:
                raise DescriptorSyntaxError(line_no, "unknown layer kind '%s' (expected conv or fc)" % tokens[0])
        except DescriptorSyntaxError:
            raise
        except LayerError as e:
            raise DescriptorSyntaxError(line_no, str(e))
        names.add(name)
        layers.append(layer)
    return layers
