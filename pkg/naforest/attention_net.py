"""Embedding networks and scaled dot-product attention scores.

Both attention stages of the forest use a small feed-forward network which
embeds the query and the keys into the same h dimensional space. The score of
a key is the dot product with the query embedding divided by sqrt(h), the
weights are the softmax of the scores.

Everything runs in float64 so that the weights sum to one to machine
precision and gradients can be checked against finite differences.
"""
import math
from dataclasses import dataclass
from typing import List, Literal, Optional

import torch
from pydantic import conint

from naforest.base_model import BaseModel
from naforest.exceptions import ParserException

DTYPE = torch.float64


class LayerSpec(BaseModel):
    """Definition of one affine layer and its activation."""

    #: number of inputs
    input_width: conint(ge=1)
    #: number of outputs
    output_width: conint(ge=1)
    #: activation applied after the affine map
    activation: Literal["tanh", "linear"] = "linear"


def architecture_specs(
    architecture: Literal["naf1", "naf3"], d: int, embed_dim: int = 16
) -> List[LayerSpec]:
    """Layer specs of the named architectures.

    naf1 is a single linear layer, naf3 two tanh layers followed by a linear
    one, all ``embed_dim`` units wide.

    Args:
        architecture (Literal["naf1", "naf3"]): name of the architecture.
        d (int): input width.
        embed_dim (int): width of every layer. Defaults to 16.

    Returns:
        List[LayerSpec]: chained layer definitions.
    """
    if architecture == "naf1":
        return [LayerSpec(input_width=d, output_width=embed_dim)]
    if architecture == "naf3":
        return [
            LayerSpec(
                input_width=d, output_width=embed_dim, activation="tanh"
            ),
            LayerSpec(
                input_width=embed_dim,
                output_width=embed_dim,
                activation="tanh",
            ),
            LayerSpec(input_width=embed_dim, output_width=embed_dim),
        ]
    raise ParserException(
        "NetworkConfig",
        "architecture",
        f"Unknown architecture {architecture!r}. Valid names are naf1, naf3.",
    )


class AttentionNet(torch.nn.Module):
    """Feed-forward embedding network."""

    def __init__(self, specs: List[LayerSpec]) -> None:
        """Create the (zero initialized) layers.

        Args:
            specs (List[LayerSpec]): chained layer definitions.

        Raises:
            ParserException: if the list is empty or the widths do not chain.
        """
        super().__init__()
        if not specs:
            raise ParserException(
                "AttentionNet", "layers", "At least one layer is needed."
            )
        for idx, (first, second) in enumerate(zip(specs, specs[1:])):
            if first.output_width != second.input_width:
                raise ParserException(
                    "AttentionNet",
                    "layers",
                    f"Layer {idx} has {first.output_width} outputs but layer "
                    f"{idx + 1} expects {second.input_width} inputs.",
                )
        self.specs = [LayerSpec(**spec.export_dict()) for spec in specs]
        self.layers = torch.nn.ModuleList(
            torch.nn.Linear(spec.input_width, spec.output_width, dtype=DTYPE)
            for spec in self.specs
        )
        with torch.no_grad():
            for layer in self.layers:
                layer.weight.zero_()
                layer.bias.zero_()

    @property
    def input_width(self) -> int:
        """Width of the input vectors."""
        return self.specs[0].input_width

    @property
    def embed_dim(self) -> int:
        """Width h of the embeddings."""
        return self.specs[-1].output_width

    @property
    def n_parameters(self) -> int:
        """Length of the flattened parameter vector."""
        return sum(param.numel() for param in self.parameters())

    def forward(self, v: torch.Tensor) -> torch.Tensor:
        """Embed ``v`` (any leading batch dimensions)."""
        out = v
        for spec, layer in zip(self.specs, self.layers):
            out = layer(out)
            if spec.activation == "tanh":
                out = torch.tanh(out)
        return out

    def parameter_vector(self) -> torch.Tensor:
        """Detached copy of all parameters, layer by layer, weight first."""
        return (
            torch.nn.utils.parameters_to_vector(self.parameters())
            .detach()
            .clone()
        )

    def set_parameter_vector(self, vector: torch.Tensor) -> None:
        """Restore the parameters from a flattened vector."""
        vector = torch.as_tensor(vector, dtype=DTYPE)
        if vector.numel() != self.n_parameters:
            raise ValueError(
                f"Expected {self.n_parameters} parameters, got "
                f"{vector.numel()}."
            )
        with torch.no_grad():
            torch.nn.utils.vector_to_parameters(
                vector.clone(), self.parameters()
            )

    def make_constant(self) -> "AttentionNet":
        """Zero all parameters, every input is then embedded to zero."""
        with torch.no_grad():
            for param in self.parameters():
                param.zero_()
        return self


def init_net(specs: List[LayerSpec], seed: int) -> AttentionNet:
    """Create a randomly initialized network.

    Weights are drawn uniformly from [-1/sqrt(fan_in), 1/sqrt(fan_in)],
    biases are zero.

    Args:
        specs (List[LayerSpec]): chained layer definitions.
        seed (int): seed of the weights.

    Returns:
        AttentionNet: the network.
    """
    net = AttentionNet(specs)
    generator = torch.Generator().manual_seed(int(seed))
    with torch.no_grad():
        for layer in net.layers:
            bound = 1.0 / math.sqrt(layer.in_features)
            layer.weight.uniform_(-bound, bound, generator=generator)
            layer.bias.zero_()
    return net


def forward(net: AttentionNet, v: torch.Tensor) -> torch.Tensor:
    """Embedding of ``v`` by ``net``."""
    return net(torch.as_tensor(v, dtype=DTYPE))


def scaled_scores(query: torch.Tensor, keys: torch.Tensor) -> torch.Tensor:
    """Dot products of the query with every key, divided by sqrt(h).

    Args:
        query (torch.Tensor): (..., h) query embeddings.
        keys (torch.Tensor): (..., r, h) key embeddings.

    Returns:
        torch.Tensor: (..., r) raw scores.
    """
    return (keys @ query.unsqueeze(-1)).squeeze(-1) / math.sqrt(
        query.shape[-1]
    )


def masked_softmax(scores: torch.Tensor, mask: torch.Tensor) -> torch.Tensor:
    """Softmax over the last axis restricted to ``mask``.

    Rows without any unmasked entry get all-zero weights.

    Args:
        scores (torch.Tensor): (..., r) raw scores.
        mask (torch.Tensor): (..., r) booleans, True for entries taking part.

    Returns:
        torch.Tensor: (..., r) weights, summing to one on valid rows.
    """
    valid = mask.any(dim=-1, keepdim=True)
    filled = scores.masked_fill(~mask, float("-inf"))
    filled = torch.where(valid, filled, torch.zeros_like(filled))
    return torch.softmax(filled, dim=-1) * valid


@dataclass(frozen=True)
class ScoreBatch:
    """Query, keys, raw scores and normalized weights of one attention."""

    query: torch.Tensor
    keys: torch.Tensor
    scores: torch.Tensor
    weights: torch.Tensor


def score(
    query_emb: torch.Tensor,
    key_embs: torch.Tensor,
    mask: Optional[torch.Tensor] = None,
) -> ScoreBatch:
    """Scaled dot-product attention of one query over a list of keys.

    Args:
        query_emb (torch.Tensor): h query embedding.
        key_embs (torch.Tensor): r x h key embeddings.
        mask (Optional[torch.Tensor]): r booleans, default all True.

    Raises:
        ValueError: for an empty key list or mismatching widths.

    Returns:
        ScoreBatch: scores and weights.
    """
    query_emb = torch.as_tensor(query_emb, dtype=DTYPE)
    key_embs = torch.as_tensor(key_embs, dtype=DTYPE)
    if key_embs.ndim != 2 or key_embs.shape[0] == 0:
        raise ValueError("At least one key is needed for the attention.")
    if key_embs.shape[1] != query_emb.shape[-1]:
        raise ValueError(
            f"Keys of width {key_embs.shape[1]} do not match the query width "
            f"{query_emb.shape[-1]}."
        )
    raw = scaled_scores(query_emb, key_embs)
    if mask is None:
        weights = torch.softmax(raw, dim=-1)
    else:
        weights = masked_softmax(raw, torch.as_tensor(mask, dtype=torch.bool))
    return ScoreBatch(query_emb, key_embs, raw, weights)


def score_softmax(
    query_emb: torch.Tensor, key_embs: torch.Tensor
) -> torch.Tensor:
    """Normalized attention weights of the keys, see :func:`score`."""
    return score(query_emb, key_embs).weights
