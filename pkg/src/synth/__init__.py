from src.synth.generator import (
    Driver,
    SynthSpec,
    SynthResult,
    generate,
    preset,
    PRESETS,
    adjacency_from_coupling,
)
from src.synth.oracles import (
    oracle_decompose,
    oracle_softmax,
    oracle_attention,
    oracle_pcc,
    oracle_int_attention,
    patch_linear_reference,
)

__all__ = [
    "Driver",
    "SynthSpec",
    "SynthResult",
    "generate",
    "preset",
    "PRESETS",
    "adjacency_from_coupling",
    "oracle_decompose",
    "oracle_softmax",
    "oracle_attention",
    "oracle_pcc",
    "oracle_int_attention",
    "patch_linear_reference",
]
