import json

import pytest

from vadsearch.arch import (ALL_OPS, ATTENTION_OPS, CONV_OPS, FFN_OPS,
                            ArchFormatError, ArchSpec, CellSpec, OpKind,
                            canonical_hash, deserialize_arch, discovered_arch,
                            discovered_cell, mutate_cell, random_cell,
                            serialize_arch, validate_arch, validate_cell,
                            wl_features)


def test_op_census():
    assert len(OpKind) == 18
    assert len(CONV_OPS) == 4
    assert len(ATTENTION_OPS) == 6
    assert len(FFN_OPS) == 3
    glu = {o for o in OpKind if o.value.startswith("GLU")}
    assert len(glu) == 2
    assert OpKind.SE_025 in OpKind and OpKind.SKIP in OpKind and OpKind.ZERO in OpKind


def test_validate_wellformed():
    report = validate_cell(discovered_cell())
    assert report.ok and report.violations == []


def test_validate_in_degree():
    cell = discovered_cell()
    bad = CellSpec(edges=cell.edges + ((0, 2, OpKind.SKIP),))
    report = validate_cell(bad)
    assert not report.ok
    assert any("in-degree" in v for v in report.violations)


def test_validate_all_zero_disconnected():
    edges = tuple((0, d, OpKind.ZERO) for d in (2, 2, 3, 3, 4, 4))
    report = validate_cell(CellSpec(edges=edges))
    assert not report.ok
    assert any("disconnected" in v for v in report.violations)


def test_validate_backward_edge():
    cell = discovered_cell()
    edges = list(cell.edges)
    edges[0] = (4, 2, OpKind.SKIP)
    report = validate_cell(CellSpec(edges=tuple(edges)))
    assert not report.ok


def test_random_cell_valid_and_deterministic():
    a = random_cell(0, ALL_OPS)
    assert validate_cell(a).ok
    assert len(a.edges) == 6
    assert a == random_cell(0, ALL_OPS)
    assert a != random_cell(1, ALL_OPS)


def test_random_cell_single_op_space():
    cell = random_cell(0, {OpKind.SKIP})
    assert validate_cell(cell).ok
    assert all(op is OpKind.SKIP for _, _, op in cell.edges)


def test_random_cell_zero_only_rejected():
    with pytest.raises(ValueError):
        random_cell(0, {OpKind.ZERO})


def test_mutate_edit_distance_one():
    cell = random_cell(3)
    mutant = mutate_cell(cell, 7)
    assert validate_cell(mutant).ok
    diffs = [i for i in range(6) if cell.edges[i] != mutant.edges[i]]
    assert len(diffs) == 1
    old, new = cell.edges[diffs[0]], mutant.edges[diffs[0]]
    # either the op changed or the source changed, never both
    assert (old[0] == new[0]) != (old[2] == new[2])


def test_mutate_op_only_mode():
    all_skip = CellSpec(edges=tuple(
        (0, d, OpKind.SKIP) for d in (2, 2, 3, 3, 4, 4)))
    mutant = mutate_cell(all_skip, 5, moves=("op",))
    non_skip = [op for _, _, op in mutant.edges if op is not OpKind.SKIP]
    assert len(non_skip) == 1


def test_mutation_chain_stays_valid():
    cell = random_cell(0)
    for step in range(50):
        cell = mutate_cell(cell, rng_seed=step)
        assert validate_cell(cell).ok


def test_discovered_cell_contract():
    cell = discovered_cell()
    assert validate_cell(cell).ok
    ops = {op for _, _, op in cell.edges}
    assert OpKind.MBCONV_3X4 in ops
    assert OpKind.SE_025 in ops
    assert {d for _, d, _ in cell.edges} == {2, 3, 4}


def test_serialize_round_trip():
    arch = discovered_arch()
    assert deserialize_arch(serialize_arch(arch)) == arch


def test_deserialize_unknown_op():
    doc = json.loads(serialize_arch(discovered_arch()))
    doc["cell"]["edges"][0][2] = "MBConv7x2"
    with pytest.raises(ArchFormatError, match="unknown operation"):
        deserialize_arch(json.dumps(doc))


def test_deserialize_wrong_edge_count():
    doc = json.loads(serialize_arch(discovered_arch()))
    doc["cell"]["edges"] = doc["cell"]["edges"][:5]
    with pytest.raises(ArchFormatError, match="6 edges"):
        deserialize_arch(json.dumps(doc))


def test_deserialize_missing_field():
    doc = json.loads(serialize_arch(discovered_arch()))
    del doc["base_channels"]
    with pytest.raises(ArchFormatError, match="missing"):
        deserialize_arch(json.dumps(doc))


def test_arch_invariants():
    bad = discovered_arch(base_channels=6)
    assert not validate_arch(bad).ok
    bad = discovered_arch(reduction_index=9)
    assert not validate_arch(bad).ok


def test_wl_h0_census():
    cell = random_cell(4)
    feats = wl_features(cell, h=0)
    assert feats.counts["0|IN1"] == 1
    assert feats.counts["0|IN2"] == 1
    assert feats.counts["0|ADD"] == 3
    op_total = sum(c for k, c in feats.counts.items()
                   if k.split("|")[1] not in ("IN1", "IN2", "ADD"))
    assert op_total == 6
    assert sum(feats.counts.values()) == 11  # 5 graph nodes + 6 op nodes


def test_wl_permutation_invariance():
    # swap the roles of add2/add3 in a cell where both read only input ports
    a = CellSpec(edges=(
        (0, 2, OpKind.SKIP), (1, 2, OpKind.FFN_1),
        (0, 3, OpKind.GLU_3), (1, 3, OpKind.SE_025),
        (0, 4, OpKind.MHA_T_2), (1, 4, OpKind.MBCONV_3X2),
    ))
    b = CellSpec(edges=(
        (0, 2, OpKind.SKIP), (1, 2, OpKind.FFN_1),
        (0, 3, OpKind.MHA_T_2), (1, 3, OpKind.MBCONV_3X2),
        (0, 4, OpKind.GLU_3), (1, 4, OpKind.SE_025),
    ))
    for h in (0, 1, 2, 3):
        assert wl_features(a, h) == wl_features(b, h)
    assert canonical_hash(a) == canonical_hash(b)


def test_wl_monotone_in_depth():
    cell = random_cell(9)
    shallow = wl_features(cell, 2).counts
    deep = wl_features(cell, 3).counts
    restricted = {k: v for k, v in deep.items() if int(k.split("|")[0]) <= 2}
    assert restricted == shallow


def test_wl_label_budget():
    cell = random_cell(2)
    feats = wl_features(cell, h=2)
    assert len(feats.counts) <= 3 * 11


def test_canonical_hash_stability():
    cell = random_cell(5)
    assert canonical_hash(cell) == canonical_hash(cell)
    round_tripped = deserialize_arch(serialize_arch(discovered_arch())).cell
    assert canonical_hash(round_tripped) == canonical_hash(discovered_cell())


def test_canonical_hash_sensitive_to_mutation():
    changed = 0
    for seed in range(100):
        cell = random_cell(seed)
        mutant = mutate_cell(cell, rng_seed=1000 + seed)
        if canonical_hash(mutant) != canonical_hash(cell):
            changed += 1
    assert changed >= 99
