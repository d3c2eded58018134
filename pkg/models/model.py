"""
Binary network model: stem, binary units and classifier.
"""

from typing import Dict, List, Optional, Union

import numpy as np

from binarize.kinds import Lab
from binarize.quantize import quantize_lab_weights
from models.layers import MODES, BatchNorm, BinaryUnit, Classifier, FeatureCapture, Mode, Stem
from models.plan import ModelPlan
from schemas.net_schemas import ModelSpec
from tensor.bits import BitTensor
from tensor.real import RealTensor
from utils.exceptions import CheckpointFormatError, ConfigError, ShapeMismatchError
from utils.logger import get_logger

logger = get_logger(__name__)

StateTensor = Union[RealTensor, BitTensor]


class Model:
    """
    A built network.

    Parameters are RealTensors owned by the layers; the optimizer replaces
    their `data` arrays between steps. Names are stable and follow build
    order, which is also the checkpoint order.
    """

    def __init__(self, spec: ModelSpec, plan: ModelPlan, stem: Stem, units: List[BinaryUnit], classifier: Classifier):
        self.spec = spec
        self.plan = plan
        self.stem = stem
        self.units = units
        self.classifier = classifier
        self.threads = 1
        self.lab_weight_bits = 32

    def forward(
        self,
        batch: RealTensor,
        mode: Mode = "infer",
        profiler=None,
        captures: Optional[Dict[str, FeatureCapture]] = None,
    ) -> RealTensor:
        """
        Logits (N, classes, 1, 1) of a batch.

        Args:
            batch (RealTensor): (N, C, H, W) images matching the spec's input shape.
            mode (str): "train", "relaxed" or "infer".
            profiler: Optional `bench.profiler.Profiler` timing each operator.
            captures (dict, optional): Filled with each binary layer's
                pre/post binarization maps (infer mode only).

        Raises:
            ShapeMismatchError: If the batch shape does not match the spec.
            ConfigError: If `mode` is not one of train, relaxed or infer.
        """
        if mode not in MODES:
            raise ConfigError(f"Unknown forward mode {mode!r}", key="mode")
        if tuple(batch.data.shape[1:]) != tuple(self.spec.input_shape):
            raise ShapeMismatchError(
                f"Batch of shape {tuple(batch.data.shape)} does not match model input {tuple(self.spec.input_shape)}"
            )
        x = self.stem.forward(batch, mode, profiler)
        for unit in self.units:
            x = unit.forward(x, mode, profiler, captures, self.threads)
        return self.classifier.forward(x, profiler)

    def named_parameters(self) -> Dict[str, RealTensor]:
        params = dict(self.stem.parameters())
        for unit in self.units:
            params.update(unit.parameters())
        params.update(self.classifier.parameters())
        return params

    def batchnorms(self) -> Dict[str, BatchNorm]:
        norms = dict(self.stem.batchnorms())
        for unit in self.units:
            norms.update(unit.batchnorms())
        return norms

    def lab_sites(self) -> Dict[str, Lab]:
        return {unit.name: unit.lab for unit in self.units if unit.lab is not None}

    def betas(self) -> Dict[str, float]:
        return {name: lab.params.beta.item() for name, lab in self.lab_sites().items()}

    def binary_weight_names(self) -> List[str]:
        return [f"{unit.name}.conv.weight" for unit in self.units if unit.binarizer is not None]

    def parameter_count(self) -> int:
        """Trainable parameters, latent binary weights included."""
        return sum(p.data.size for p in self.named_parameters().values())

    def lab_parameter_count(self) -> int:
        return sum(lab.params.parameter_count() for lab in self.lab_sites().values())

    def param_bytes(self) -> float:
        """
        Deployed model size: binary weights 1 bit, LAB kernels at their
        quantized width, every other parameter 4 bytes.
        """
        binary = set(self.binary_weight_names())
        lab_kernels = {f"lab.{name}.dw_weights" for name in self.lab_sites()}
        total = 0.0
        for name, p in self.named_parameters().items():
            if name in binary:
                total += p.data.size / 8
            elif name in lab_kernels:
                total += p.data.size * self.lab_weight_bits / 8
            else:
                total += p.data.size * 4
        return total

    def quantize_lab(self, bits: int) -> None:
        """Replace every LAB kernel by its INT<bits> dequantized values."""
        for unit in self.units:
            if unit.lab is not None:
                unit.binarizer = Lab(quantize_lab_weights(unit.lab.params, bits), unit.lab.padding)
        self.lab_weight_bits = bits
        logger.info(f"✓ Quantized {len(self.lab_sites())} LAB sites to INT{bits}")

    def state_tensors(self) -> Dict[str, StateTensor]:
        """Checkpoint contents: parameters, batchnorm statistics and packed binary weights."""
        state: Dict[str, StateTensor] = {}
        for name, p in self.named_parameters().items():
            state[name] = p
        for prefix, bn in self.batchnorms().items():
            for name, values in bn.buffers(prefix).items():
                state[name] = RealTensor(values)
        for unit in self.units:
            if unit.binarizer is not None:
                state[f"{unit.name}.conv.packed"] = unit.packed().weights
        return state

    def load_state(self, tensors: Dict[str, StateTensor]) -> None:
        """
        Restore parameters and batchnorm statistics.

        Packed weights in the checkpoint are derived data and are checked
        against the restored latent weights.

        Raises:
            CheckpointFormatError: On missing or unexpected tensors.
            ShapeMismatchError: If a tensor does not fit this model.
        """
        expected = self.state_tensors()
        missing = [name for name in expected if name not in tensors]
        unexpected = [name for name in tensors if name not in expected]
        if missing or unexpected:
            raise CheckpointFormatError(f"Checkpoint does not fit the model: missing {missing[:5]}, unexpected {unexpected[:5]}")
        for name, tensor in tensors.items():
            target = expected[name]
            if tensor.shape != target.shape:
                raise ShapeMismatchError(f"{name}: checkpoint shape {tensor.shape.as_tuple()} != model {target.shape.as_tuple()}")
        for name, p in self.named_parameters().items():
            p.data = np.ascontiguousarray(tensors[name].data.astype(p.data.dtype))
        for prefix, bn in self.batchnorms().items():
            bn.load_buffers(prefix, {name: tensors[name].data for name in bn.buffers(prefix)})
        for unit in self.units:
            if unit.binarizer is not None and unit.packed().weights != tensors[f"{unit.name}.conv.packed"]:
                raise CheckpointFormatError(f"{unit.name}: packed weights disagree with the latent weights")
