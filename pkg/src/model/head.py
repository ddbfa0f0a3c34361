from src.autodiff import Module, Tensor, add, matmul, reshape, transpose
from src.autodiff.module import constant_init, uniform_init
from src.errors import ShapeError


def flatten(z_final: Tensor) -> Tensor:
    """(B, N_eff, C, D) -> (B, C, N_eff * D), rows concatenated in temporal order."""
    b, n, c, d = z_final.shape
    return reshape(transpose(z_final, (0, 2, 1, 3)), (b, c, n * d))


class PredictionHead(Module):
    """Linear map from flattened tokens to the horizon, shared by every channel."""

    def __init__(self, n_eff: int, d_model: int, horizon: int, bias: bool = True, seed: int = 0,
                 name: str = "head"):
        width = n_eff * d_model
        self.W_head = uniform_init(seed, f"{name}.W_head", (width, horizon), fan_in=width)
        self.b_head = constant_init(f"{name}.b_head", (horizon,), 0.0) if bias else None

    def project(self, z_tilde: Tensor) -> Tensor:
        """(B, C, N_eff * D) -> (B, O, C)."""
        if z_tilde.shape[-1] != self.W_head.shape[0]:
            raise ShapeError(f"head expects width {self.W_head.shape[0]}, got {z_tilde.shape[-1]}")
        h = matmul(z_tilde, self.W_head)
        if self.b_head is not None:
            h = add(h, self.b_head)
        return transpose(h, (0, 2, 1))

    def __call__(self, z_final: Tensor) -> Tensor:
        return self.project(flatten(z_final))
