"""Layer sensitivity analysis and mixed-precision policy assignment.

Builds the synthetic GLU-block fixture whose down-projection input
carries a heavy-tailed outlier channel, ranks layers by SQNR under W6A6,
and derives the W6A8-for-down_proj policy from the ranking.
"""

from bitserial import (
    activation_bits,
    assign_policy,
    layer_error,
    make_glu_fixture,
    outlier_score,
    rank_layers,
)

dumps = make_glu_fixture(seed=0)
print("fixture layers:")
for d in dumps:
    print(f"  {d.layer_name:28s} weight {d.weight.shape}  acts {d.activations.shape}  "
          f"outlier score {outlier_score(d.activations):6.1f}")

# Rank under uniform W6A6: the outlier inflates down_proj's group scales,
# which crushes the other 127 channels of every poisoned group.
report = rank_layers(dumps, w_bits=6, a_bits=6, group_size=128)
print("\nranking (most sensitive first):")
for name in report.ranking:
    m = next(m for m in report.metrics if m.layer_name == name)
    print(f"  {name:28s} SQNR {m.sqnr_db:6.2f} dB   MSE {m.output_mse:.3e}")

# Giving the sensitive layer 8-bit activations buys back accuracy.
down = next(d for d in dumps if d.layer_kind == "down_proj")
s6, _ = layer_error(down, 6, 6, 128)
s8, _ = layer_error(down, 6, 8, 128)
print(f"\ndown_proj SQNR: {s6:.2f} dB at A6  ->  {s8:.2f} dB at A8")

# Budget of one high-precision layer reproduces the default policy.
policy = assign_policy(report, high_bits=8, budget_k=1)
print("\nassigned policy (budget 1):")
for kind in ("qkv_proj", "o_proj", "gate_proj", "up_proj", "down_proj"):
    print(f"  {kind:10s} -> A{activation_bits(kind, policy)}")
