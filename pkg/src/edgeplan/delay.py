"""Closed-form delay model: per-layer compute delay, per-link transfer
delay, and total completion time of a placement.

Compute delay of running layer l on server i at b bits for n tokens:

    cp = n * (flops_l / throughput_i) * (b * p_l / original_precision_l)

Transfer delay of shipping layer l's output across a link for n rounds:

    cm = n * (payload_l * b / capacity + prop_delay)

where the per-round payload defaults to batch_size * embedding_size
elements (each autoregressive round moves one token's activation; the KV
cache keeps earlier tokens resident). Setting per_token_activation=False
uses the layer's declared output_size instead, the literal reading.

The b * p_l / original_precision scaling in cp is kept by default;
cp_scaling="without_pl" drops the p_l factor (scaling b/original_precision)
since its dimensional role is debatable.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .core import LayerProfile, LinkSpec, ProblemInstance, ServerSpec

MAX_BITS = 64


class InvalidBits(ValueError):
    """Bit-width outside the supported [2, 64] range."""


class NoLink(ValueError):
    """Distinct servers with no declared link between them."""


class InfeasibleEdge(ValueError):
    """A plan routes consecutive layers over a missing link."""


@dataclass(frozen=True)
class DelayOptions:
    cp_scaling: str = "with_pl"  # or "without_pl"
    per_token_activation: bool = True

    def __post_init__(self):
        if self.cp_scaling not in ("with_pl", "without_pl"):
            raise ValueError(f"cp_scaling: {self.cp_scaling!r}")

    def to_doc(self) -> dict:
        return {"cp_scaling": self.cp_scaling,
                "per_token_activation": self.per_token_activation}

    @classmethod
    def from_doc(cls, doc: dict) -> "DelayOptions":
        return cls(cp_scaling=doc.get("cp_scaling", "with_pl"),
                   per_token_activation=doc.get("per_token_activation", True))


@dataclass(frozen=True)
class DelayTable:
    """Precomputed delay coefficients for one instance.

    cp maps (server, layer, bits) -> seconds; cm maps
    (layer, src, dst, bits) -> seconds with math.inf marking a missing link
    and exact 0.0 on the diagonal.
    """
    cp: dict[tuple[int, int, int], float]
    cm: dict[tuple[int, int, int, int], float]
    num_servers: int
    num_layers: int
    feasible_bits: tuple[tuple[int, ...], ...]


def _check_bits(bits: int) -> None:
    if not (2 <= bits <= MAX_BITS):
        raise InvalidBits(f"bits={bits} outside [2, {MAX_BITS}]")


def compute_cp(layer: LayerProfile, server: ServerSpec, bits: int,
               tokens: int, options: DelayOptions = DelayOptions()) -> float:
    """Compute delay in seconds for all n autoregressive rounds."""
    _check_bits(bits)
    scale = bits / layer.original_precision
    if options.cp_scaling == "with_pl":
        scale *= layer.output_size
    return tokens * (layer.flops / server.compute_throughput) * scale


def round_payload_elements(layer: LayerProfile, batch: int, embedding: int,
                           options: DelayOptions = DelayOptions()) -> float:
    """Activation elements moved per round between consecutive layers."""
    if options.per_token_activation:
        return float(batch * embedding)
    return layer.output_size


def compute_cm(layer: LayerProfile, link: LinkSpec | None, bits: int,
               tokens: int, batch: int, embedding: int,
               options: DelayOptions = DelayOptions(), *,
               same_server: bool = False) -> float:
    """Transfer delay in seconds for all n rounds; 0 on a self-link.

    ``link=None`` with distinct servers raises NoLink; the table builder
    converts that case to an infinity sentinel instead.
    """
    _check_bits(bits)
    if same_server:
        return 0.0
    if link is None:
        raise NoLink("no link between the requested servers")
    payload = round_payload_elements(layer, batch, embedding, options)
    return tokens * (payload * bits / link.capacity_bps + link.propagation_delay)


def build_delay_table(instance: ProblemInstance,
                      options: DelayOptions = DelayOptions()) -> DelayTable:
    """Evaluate cp and cm pointwise over every placement-relevant index."""
    cp: dict[tuple[int, int, int], float] = {}
    cm: dict[tuple[int, int, int, int], float] = {}
    model = instance.model
    for layer in model.layers:
        bits_menu = instance.feasible_bits[layer.index]
        for server in instance.cluster.servers:
            for b in bits_menu:
                cp[(server.id, layer.index, b)] = compute_cp(
                    layer, server, b, instance.tokens, options)
        for src in instance.cluster.servers:
            for dst in instance.cluster.servers:
                for b in bits_menu:
                    key = (layer.index, src.id, dst.id, b)
                    if src.id == dst.id:
                        cm[key] = 0.0
                        continue
                    link = instance.cluster.link(src.id, dst.id)
                    if link is None:
                        cm[key] = math.inf
                    else:
                        cm[key] = compute_cm(
                            layer, link, b, instance.tokens,
                            model.batch_size, model.embedding_size, options)
    return DelayTable(cp=cp, cm=cm,
                      num_servers=instance.cluster.num_servers,
                      num_layers=model.num_layers,
                      feasible_bits=instance.feasible_bits)


def evaluate_plan(assignments, table: DelayTable) -> tuple[float, float, float]:
    """Total completion time of an assignment sequence [(server, bits), ...].

    Returns (total, compute_part, comm_part). The final layer's output is
    not shipped anywhere (client download is out of the model). Raises
    InfeasibleEdge when consecutive layers sit on servers with no link.
    """
    compute = 0.0
    comm = 0.0
    for l, (server, bits) in enumerate(assignments):
        compute += table.cp[(server, l, bits)]
        if l + 1 < len(assignments):
            nxt_server = assignments[l + 1][0]
            edge = table.cm[(l, server, nxt_server, bits)]
            if math.isinf(edge):
                raise InfeasibleEdge(
                    f"no link {server}->{nxt_server} for layers {l}->{l + 1}")
            comm += edge
    return compute + comm, compute, comm


def cp_table_csv(table: DelayTable) -> str:
    """Debug export of the compute-delay table."""
    lines = ["server,layer,bits,cp_seconds"]
    for (i, l, b) in sorted(table.cp):
        lines.append(f"{i},{l},{b},{table.cp[(i, l, b)]!r}")
    return "\n".join(lines) + "\n"
