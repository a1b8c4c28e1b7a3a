import numpy as np
import pytest

from tesseract_rg.code import is_logical_z_failure
from tesseract_rg.complex import Cell, Chain, boundary, build_lattice
from tesseract_rg.gf2opt import BinarySystem, InfeasibleSystem, min_weight_coset
from tesseract_rg.rgdecoder import (
    RGDecoder, build_boxes, build_coarse_maps, coarse_edge_mask, decode_rg, format_trace,
    reduce_syndrome, rg_level,
)
from tesseract_rg.spacetime import spacetime_lattice

from conftest import lattice, tesseract

_decoders = {}


def decoder(L):
    if L not in _decoders:
        _decoders[L] = RGDecoder(lattice(2, 2, (L,) * 4))
    return _decoders[L]


def images(maps, k, cell):
    ptr, idx = (maps.edge_ptr, maps.edge_idx) if k == 1 else (maps.face_ptr, maps.face_idx)
    i = maps.small.index(cell)
    return {maps.large.cell(k, int(j)) for j in idx[ptr[i] : ptr[i + 1]]}


def test_rg_levels():
    assert rg_level(lattice(2, 2, (2, 2, 2, 2))) == 0
    assert rg_level(lattice(2, 2, (3, 3, 3, 3))) == 1
    assert rg_level(lattice(2, 2, (5, 5, 5, 5))) == 2
    with pytest.raises(ValueError, match="not a supported size"):
        rg_level(lattice(2, 2, (4, 4, 4, 4)))
    with pytest.raises(ValueError):
        build_coarse_maps(lattice(2, 2, (2, 2, 2, 2)))


def test_edge_map_examples():
    maps = build_coarse_maps(lattice(2, 2, (5, 5, 5, 5)))
    assert images(maps, 1, Cell((0,), (0, 1, 1, 1))) == {Cell((0,), (0, 2, 2, 2)), Cell((0,), (1, 2, 2, 2))}
    # rough direction edge in the middle plane keeps a single image
    assert images(maps, 1, Cell((2,), (1, 1, 2, 1))) == {Cell((2,), (2, 2, 4, 2))}
    assert len(images(maps, 1, Cell((2,), (1, 1, 1, 1)))) == 2


def test_face_map_example():
    maps = build_coarse_maps(lattice(2, 2, (5, 5, 5, 5)))
    got = images(maps, 2, Cell((0, 1), (1, 0, 1, 1)))
    want = {Cell((0, 1), b) for b in [(2, 0, 2, 2), (3, 0, 2, 2), (2, 1, 2, 2), (3, 1, 2, 2)]}
    assert got == want
    sizes = np.diff(maps.face_ptr)
    assert set(sizes.tolist()) <= {1, 2, 4}


def commutes(lat):
    maps = build_coarse_maps(lat)
    lhs = maps.matrix(1) @ maps.small.boundary_matrix(2)
    rhs = maps.large.boundary_matrix(2) @ maps.matrix(2)
    return not np.any((lhs - rhs).toarray() % 2)


@pytest.mark.parametrize("L", [3, 5])
def test_maps_commute_with_boundary(L):
    assert commutes(lattice(2, 2, (L,) * 4))


def test_maps_commute_in_spacetime():
    assert commutes(spacetime_lattice(tesseract(3), 3))
    assert commutes(lattice(1, 2, (5, 5, 5)))


def test_first_box_and_order():
    boxes = build_boxes(lattice(2, 2, (5, 5, 5, 5)))
    assert boxes[0].center == (1, 1, 1, 1)
    orders = [b.order for b in boxes]
    assert orders == sorted(orders)
    assert len(boxes) == 36


@pytest.mark.parametrize("L,max_faces", [(5, 360), (9, 360)])
def test_box_sizes_4d(L, max_faces):
    lat = lattice(2, 2, (L,) * 4)
    boxes = build_boxes(lat)
    assert max(b.edges.size for b in boxes) == 152
    assert max(b.faces.size for b in boxes) <= max_faces


def test_box_sizes_5d():
    boxes = build_boxes(spacetime_lattice(tesseract(5), 5))
    assert max(b.edges.size for b in boxes) == 650
    assert max(b.faces.size for b in boxes) <= 2100


def test_boxes_cover_fine_edges_only():
    lat = lattice(2, 2, (5, 5, 5, 5))
    coarse = coarse_edge_mask(lat)
    covered = np.zeros(lat.counts[1], dtype=bool)
    for b in build_boxes(lat):
        assert not coarse[b.edges].any()
        covered[b.edges] = True
    assert np.array_equal(covered, ~coarse)


def test_empty_syndrome():
    lat = lattice(2, 2, (5, 5, 5, 5))
    assert not decode_rg(lat, Chain.empty(1))
    fcg, red, _ = reduce_syndrome(lat, Chain.empty(1))
    assert not fcg.any() and not red.any()


def test_coarse_syndrome_needs_no_box_correction():
    dec = decoder(5)
    lat = dec.lattice
    maps = dec.levels[0].maps
    small_face = np.zeros(maps.small.counts[2], dtype=np.uint8)
    small_face[[3, 40]] = 1
    syn = lat.boundary_dense(2, maps.lift_faces(small_face))
    fcg, red, _ = dec.reduce(0, syn, np.ones(lat.counts[2], dtype=np.int64))
    assert not fcg.any()
    assert np.array_equal(red, maps.small.boundary_dense(2, small_face))


def test_reduction_leaves_coarse_support(rng):
    dec = decoder(5)
    lat = dec.lattice
    coarse = dec.levels[0].coarse
    for _ in range(20):
        err = (rng.random(lat.counts[2]) < 0.05).astype(np.uint8)
        syn = lat.boundary_dense(2, err)
        fcg, red, wred = dec.reduce(0, syn, np.ones(lat.counts[2], dtype=np.int64))
        after = syn ^ lat.boundary_dense(2, fcg)
        assert not after[~coarse].any()
        assert np.array_equal(dec.levels[0].maps.lift_edges(red), after)
        assert not dec.levels[0].maps.small.boundary_dense(1, red).any()
        assert wred.shape == (dec.levels[0].maps.small.counts[2],)


def test_single_face_syndrome():
    dec = decoder(3)
    lat = dec.lattice
    c = tesseract(3)
    for f in (0, 57, 120, lat.counts[2] - 1):
        face = Chain(2, [f])
        corr = dec.decode(boundary(lat, face))
        assert boundary(lat, corr) == boundary(lat, face)
        assert not is_logical_z_failure(c, corr + face)
        best = min_weight_coset(BinarySystem(lat.boundary_matrix(2), boundary(lat, face).to_dense(lat.counts[1]),
                                             np.ones(lat.counts[2])))
        assert best.objective == 1


def test_validity_at_L3(rng):
    dec = decoder(3)
    lat = dec.lattice
    for _ in range(1000):
        err = (rng.random(lat.counts[2]) < 0.03).astype(np.uint8)
        syn = lat.boundary_dense(2, err)
        assert np.array_equal(lat.boundary_dense(2, dec.decode_dense(syn)), syn)


def test_base_lattice_is_solved_exactly(rng):
    lat = lattice(2, 2, (2, 2, 2, 2))
    dec = RGDecoder(lat)
    assert not dec.levels
    for _ in range(30):
        err = (rng.random(lat.counts[2]) < 0.15).astype(np.uint8)
        syn = lat.boundary_dense(2, err)
        corr = dec.decode_dense(syn)
        best = min_weight_coset(BinarySystem(lat.boundary_matrix(2), syn, np.ones(lat.counts[2])))
        assert corr.sum() == best.objective


def test_open_syndrome_is_rejected():
    dec = decoder(3)
    with pytest.raises(ValueError, match="not closed"):
        dec.decode(Chain(1, [0]))
    with pytest.raises(ValueError):
        dec.decode_dense(np.zeros(3, dtype=np.uint8))


def test_non_boundary_syndrome_raises_infeasible():
    dec = decoder(3)
    syn = np.zeros(dec.lattice.counts[1], dtype=np.uint8)
    syn[5] = 1
    with pytest.raises(InfeasibleSystem, match="no local solution"):
        dec.decode_dense(syn)


def test_trace(rng):
    dec = RGDecoder(lattice(2, 2, (5, 5, 5, 5)))
    lat = dec.lattice
    err = (rng.random(lat.counts[2]) < 0.03).astype(np.uint8)
    trace = []
    dec.decode_dense(lat.boundary_dense(2, err), trace=trace)
    assert [s.extents for s in trace] == [lat.extents, dec.levels[1].lattice.extents]
    text = format_trace(trace)
    assert len(text.splitlines()) == 2 and text.startswith("extents=")


def test_rejects_edge_qubits():
    with pytest.raises(ValueError, match="d2 = 2"):
        RGDecoder(build_lattice(1, 1, [3, 3]))
