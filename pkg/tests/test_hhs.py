from fractions import Fraction as F

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from coarse_forge.controls import affine
from coarse_forge.errors import PreconditionReplayFailed
from coarse_forge.hhs import (
    Constraint,
    PairwiseFamily,
    TotalSpaceCandidate,
    assemble_retraction,
    band_family,
    compatible_family_check,
    diagonal_family,
    encode_pairwise_diagram,
    hatted_tuple_space,
    hhs_qi_certificate,
    lattice_family,
    nearest_even_retraction,
    realization_check,
    realization_profile,
    section,
    tree_tree_family,
    uniqueness_criterion_check,
)
from coarse_forge.metric_space import MapTable, Subspace, box_window, check_upper_control, z_window


def test_encoding_counts():
    F2, _ = lattice_family(2, -2, 2)
    D = encode_pairwise_diagram(F2)
    assert (len(D.objects), len(D.arrows)) == (3, 2)
    F3, _ = lattice_family(3, -1, 1)
    D = encode_pairwise_diagram(F3)
    assert (len(D.objects), len(D.arrows)) == (6, 6)
    for a in D.arrows:
        assert check_upper_control(a.map, affine(1, 0)).passed


def test_hatted_examples():
    Fam, X = lattice_family(2, -3, 3)
    T = hatted_tuple_space(Fam, 0)
    assert sorted(T.window) == sorted(box_window(2, -3, 3).window)
    Fd, _ = diagonal_family(-4, 4)
    T = hatted_tuple_space(Fd, 0)
    assert list(T.window) == [(x, x) for x in range(-4, 5)]
    assert T.section_check.passed and T.verified
    assert section(Fd, (1, 1)) == (1, 1, (1, 1))


@given(st.integers(0, 3), st.sets(st.tuples(st.integers(0, 4), st.integers(0, 4)), min_size=1, max_size=8))
@settings(max_examples=50)
def test_relaxation_matches_neighbourhood_scan(kappa, pts):
    fam = PairwiseFamily({"U": z_window(0, 4), "V": z_window(0, 4)},
                         {"U,V": Constraint("points", points=tuple(sorted(pts)))})
    T = hatted_tuple_space(fam, kappa)
    want = [(a, b) for a in range(5) for b in range(5)
            if any(max(abs(a - p), abs(b - q)) <= kappa for p, q in pts)]
    assert sorted(T.window) == want


def test_realization_examples():
    Fam, X = lattice_family(2, -3, 3)
    assert realization_check(Fam, X, 0)["r_observed"] == 0
    Fd, Xd = diagonal_family(-4, 4)
    assert realization_check(Fd, Xd, 0)["r_observed"] == 0
    prof = realization_profile(Fd, Xd, [0, 1, 2, 3])
    vals = [prof[F(k)] for k in range(4)]
    assert vals == sorted(vals)
    assert prof[F(2)] <= 2


def test_uniqueness_criterion_examples():
    _, X = lattice_family(2, -6, 6, "Linf")
    c = uniqueness_criterion_check(X)
    assert c.passed and c.constants["rho"] == affine(1, 0)
    _, X1 = lattice_family(2, -6, 6, "L1")
    c = uniqueness_criterion_check(X1)
    assert c.passed and c.constants["rho"] == affine(2, 0)
    fam = PairwiseFamily({"U": z_window(-6, 6)})
    box = box_window(2, -6, 6)
    one = TotalSpaceCandidate(box, {"U": MapTable(box, fam.factors["U"], {p: p[0] for p in box.window})}, fam)
    c = uniqueness_criterion_check(one)
    assert not c.passed and c.witness["d_product"] == 0


def test_qi_examples():
    Fam, X = lattice_family(2, -4, 4)
    c = hhs_qi_certificate(Fam, X, 1, 0)
    assert c.passed and c.constants["exact_agreement"]
    assert c.constants["upper"] == affine(1, 0) and c.constants["lower_rho"] == affine(1, 0)
    Ft, Xt = tree_tree_family(2)
    c = hhs_qi_certificate(Ft, Xt, 1, 0)
    assert c.passed and c.constants["replay_upper"] == c.constants["replay_lower"] == "pass"
    F1, X1 = lattice_family(1, -8, 8)
    c = hhs_qi_certificate(F1, X1, 1, 0)
    assert c.passed and c.constants["upper"] == affine(1, 0)


def test_qi_band_family():
    Fb, Xb = band_family(-5, 5, 2)
    c = hhs_qi_certificate(Fb, Xb, 1, 0)
    assert c.passed


def even_diagonal(lo=-8, hi=8):
    base = z_window(lo, hi)
    ev = [x for x in base.window if x % 2 == 0]
    fac = {u: Subspace(base, points=ev, window=ev, name="2Z") for u in ("U", "V")}
    return PairwiseFamily(fac, {("U", "V"): Constraint("diagonal")}, name="even_diagonal")


def test_compatible_family_examples():
    Fd, _ = diagonal_family(-8, 8)
    ids = {u: MapTable.identity(Fd.factors[u]) for u in Fd.labels}
    assert compatible_family_check(Fd, Fd, ids, 0).constants["deviation"] == 0
    F2 = even_diagonal()
    snap = {u: MapTable.from_function(Fd.factors[u], F2.factors[u], lambda x: 2 * (x // 2)) for u in Fd.labels}
    c = compatible_family_check(Fd, F2, snap, 0)
    assert c.passed and c.constants["deviation"] == 0
    broken = dict(ids, V=MapTable.from_function(Fd.factors["V"], Fd.factors["V"], lambda x: -x))
    c = compatible_family_check(Fd, Fd, broken, 0)
    assert not c.passed and c.witness["pair"] == ["U", "V"]


def test_identity_retraction():
    Fam, X = lattice_family(2, -3, 3)
    ids = {u: MapTable.identity(Fam.factors[u]) for u in Fam.labels}
    res = assemble_retraction(Fam, Fam, ids, ids, 1, 0, rho=affine(1, 0))
    c = res.constants
    assert (c["K"], c["c"], c["r"]) == (0, 0, 0)
    assert (c["K_prime"], c["sigma_prime"], c["kappa_prime"]) == (0, 1, 0)
    assert res.certificate.passed


def formulas(K, c, r, rho, sigma, kappa):
    return K + rho(c) + r, max(rho(sigma) + 2 * r, K + rho(c) + r), 2 * K + 2 * rho(c) + rho(kappa) + 4 * r


def test_nearest_even_retraction():
    Fam, F2, alpha, omega, X = nearest_even_retraction(2, -6, 6)
    rho = affine(1, 1)
    res = assemble_retraction(Fam, F2, alpha, omega, 1, 0, rho=rho, total=X)
    c = res.constants
    assert (c["K"], c["c"], c["r"]) == (0, 0, 0)
    assert (c["K_prime"], c["sigma_prime"], c["kappa_prime"]) == formulas(0, 0, 0, rho, 1, 0) == (1, 2, 3)
    assert res.certificate.passed, res.certificate.witness
    with pytest.raises(PreconditionReplayFailed):
        assemble_retraction(Fam, F2, alpha, omega, 1, 0, rho=affine(1, 0))


@pytest.mark.parametrize("r", [1, 2])
def test_inflated_r_still_replays(r):
    Fam, F2, alpha, omega, _ = nearest_even_retraction(2, -4, 4)
    rho = affine(1, 1)
    res = assemble_retraction(Fam, F2, alpha, omega, 1, 0, rho=rho, r=r)
    c = res.constants
    assert (c["K_prime"], c["sigma_prime"], c["kappa_prime"]) == formulas(0, 0, r, rho, 1, 0)
    assert c["rho_prime"] == affine(1, 1 + 2 * r)
    assert res.certificate.passed


def test_retraction_bad_K_raises():
    Fam, X = lattice_family(2, -3, 3)
    shift = {u: MapTable.from_function(Fam.factors[u], Fam.factors[u], lambda x: max(-3, min(3, x + 1)))
             for u in Fam.labels}
    ids = {u: MapTable.identity(Fam.factors[u]) for u in Fam.labels}
    with pytest.raises(PreconditionReplayFailed) as e:
        assemble_retraction(Fam, Fam, shift, ids, 1, 0, rho=affine(1, 0), K=0)
    assert e.value.location["label"] == "U1"
