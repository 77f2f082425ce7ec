import numpy as np
import pytest
from hypothesis import given, strategies as st

from gauzecut import cloth
from gauzecut.cloth import ClothError, ClothParams


def reference_step(pos, prev, free, pin, edges, params):
    """Plain edge-list implementation of one engine step (test oracle)."""
    pos, prev = pos.copy(), prev.copy()
    force = np.zeros_like(pos)
    for i, j, rest in edges:
        d = pos[:, j] - pos[:, i]
        length = np.linalg.norm(d)
        f = (length - rest) / length * d
        force[:, i] += f
        force[:, j] -= f
    g = np.asarray(params.gravity)[:, None]
    nxt = pos + params.alpha * (pos - prev) + g + params.tau * (1 - params.delta) * force
    new_prev = np.where(free > 0, pos, pin)
    pos = np.where(free > 0, nxt, pin)
    for _ in range(params.constraint_iterations):
        corr = np.zeros_like(pos)
        for i, j, rest in edges:
            w = free[i] + free[j]
            if w == 0:
                continue
            d = pos[:, j] - pos[:, i]
            length = np.linalg.norm(d)
            c = (length - rest) / length * d / w
            corr[:, i] += c
            corr[:, j] -= c
        pos = pos + 0.5 * free * corr
    return pos, new_prev


def test_default_mesh_has_625_vertices():
    state = cloth.new_mesh(25, 25, 2.0, "corners")
    assert state.n_vertices == 625
    assert sorted(state.pins) == [0, 24, 600, 624]


def test_constraint_counts():
    assert len(cloth.new_mesh(3, 3, 1.0, "none").constraints()) == 12
    assert len(cloth.new_mesh(2, 2, 1.0, "all").constraints()) == 4
    diag = cloth.new_mesh(3, 3, 1.0, "none", ClothParams(diagonals=True))
    assert len(diag.constraints()) == 12 + 8


def test_constraints_join_grid_neighbours_at_rest_length():
    state = cloth.new_mesh(4, 5, 1.5, "none")
    for i, j, rest, is_cut in state.constraints():
        ri, ci = divmod(i, 5)
        rj, cj = divmod(j, 5)
        assert abs(ri - rj) + abs(ci - cj) == 1
        assert rest == pytest.approx(1.5)
        assert not is_cut


@pytest.mark.parametrize("rows,cols,spacing", [(1, 5, 1.0), (5, 1, 1.0), (3, 3, 0.0), (3, 3, -1.0)])
def test_bad_dimensions_rejected(rows, cols, spacing):
    with pytest.raises(ClothError):
        cloth.new_mesh(rows, cols, spacing)


@pytest.mark.parametrize("kw", [dict(alpha=0.0), dict(alpha=1.5), dict(delta=-0.1),
                                dict(tau=0.0), dict(constraint_iterations=0)])
def test_param_invariants(kw):
    with pytest.raises(ClothError):
        ClothParams(**kw)


def test_fully_pinned_mesh_never_moves():
    state = cloth.new_mesh(2, 2, 1.0, "all")
    before = state.pos.copy()
    cloth.step(state, 500)
    assert np.abs(state.pos - before).max() < 1e-12


def test_single_free_vertex_follows_verlet_recurrence():
    # cut everything around the centre vertex of a 3x3 mesh; it then falls freely
    params = ClothParams(gravity=(0.0, 0.0, -0.01))
    state = cloth.new_mesh(3, 3, 1.0, "all", params)
    cloth.release_pin(state, 4)
    state.act[:] = 0.0
    state.refresh()
    z, z_prev = 0.0, 0.0
    expected = []
    for _ in range(200):
        z, z_prev = z + params.alpha * (z - z_prev) + params.gravity[2], z
        expected.append(z)
    got = []
    for _ in range(200):
        cloth.step(state)
        got.append(state.pos[2, 4])
    assert np.allclose(got, expected, rtol=0, atol=1e-12)
    assert np.all(state.pos[:2, 4] == [1.0, 1.0])


def test_one_gravity_step_kinetic_energy():
    state = cloth.new_mesh(2, 2, 1.0, "all")
    assert cloth.kinetic_energy(state) == 0.0
    cloth.release_pin(state, 0)
    state.act[:] = 0.0
    state.refresh()
    cloth.step(state)
    # |g dt^2|^2 / (2 dt^2) with g = 0.01, dt = 1
    assert cloth.kinetic_energy(state) == pytest.approx(5e-05, rel=1e-12)


def test_matches_edge_list_reference(rng):
    params = ClothParams(gravity=(0.01, -0.02, -0.05))
    state = cloth.new_mesh(4, 3, 2.0, [0, 2], params)
    state.pos += rng.normal(scale=0.3, size=state.pos.shape) * state.free
    state.prev = state.pos + rng.normal(scale=0.05, size=state.pos.shape) * state.free
    edges = [(i, j, rest) for i, j, rest, _ in state.constraints()]
    pos, prev = state.pos.copy(), state.prev.copy()
    for _ in range(25):
        pos, prev = reference_step(pos, prev, state.free, state.pin, edges, params)
        cloth.step(state)
    assert np.allclose(state.pos, pos, atol=1e-10)
    assert np.allclose(state.prev, prev, atol=1e-10)


def test_pins_override_integration():
    state = cloth.gauze_mesh(5, 5)
    cloth.step(state, 50)
    target = state.pos[:, 0] + np.array([1.0, 0.0, 0.0])
    cloth.set_pin(state, 0, target)
    cloth.step(state)
    assert np.array_equal(state.pos[:, 0], target)


def test_pin_in_place_does_not_change_trajectory():
    a = cloth.gauze_mesh(5, 5)
    b = a.copy()
    cloth.set_pin(b, 0)
    cloth.step(a, 300)
    cloth.step(b, 300)
    assert np.array_equal(a.pos, b.pos)


def test_release_pin_lets_vertex_fall():
    state = cloth.new_mesh(3, 3, 1.0, "all")
    cloth.release_pin(state, 4)
    cloth.step(state, 10)
    assert state.pos[2, 4] < 0
    assert 4 not in state.pins


def test_pinned_vertices_hold_every_step():
    state = cloth.gauze_mesh(9, 9, pins="edges")
    pins = state.pins
    for _ in range(100):
        cloth.step(state)
        for v, p in pins.items():
            assert np.array_equal(state.pos[:, v], p)


def test_centre_pinned_sag_is_mirror_symmetric():
    state = cloth.new_mesh(3, 3, 1.0, [4])
    cloth.settle(state, max_steps=5000)
    z = state.pos[2].reshape(3, 3)
    x = state.pos[0].reshape(3, 3) - 1.0
    y = state.pos[1].reshape(3, 3) - 1.0
    assert np.allclose(z, z[:, ::-1], atol=1e-9)
    assert np.allclose(z, z[::-1, :], atol=1e-9)
    assert np.allclose(x, -x[:, ::-1], atol=1e-9)
    assert np.allclose(y, -y[::-1, :], atol=1e-9)
    assert z[0, 0] < z[1, 1]


def test_corner_pinned_symmetry_every_step():
    state = cloth.gauze_mesh(7, 7)
    for _ in range(50):
        cloth.step(state, 20)
        z = state.pos[2].reshape(7, 7)
        assert np.allclose(z, z[:, ::-1], atol=1e-9)
        assert np.allclose(z, z.T, atol=1e-9)


def test_default_mesh_settles():
    state = cloth.gauze_mesh()
    ke = []
    for _ in range(100):
        cloth.step(state, 100)
        ke.append(cloth.kinetic_energy(state))
    ke = np.array(ke)
    assert np.all(np.isfinite(state.pos))
    assert ke[-1] < 1e-6 * ke.max()
    # the oscillation envelope decays: window maxima never grow
    windows = ke.reshape(10, 10).max(axis=1)
    assert np.all(np.diff(windows) <= 0)


def test_settled_pinned_mesh_energy(settled_gauze):
    assert cloth.kinetic_energy(settled_gauze) < 1e-10


def test_step_is_deterministic():
    a = cloth.gauze_mesh(9, 9)
    b = cloth.gauze_mesh(9, 9)
    cloth.step(a, 777)
    cloth.step(b, 777)
    assert np.array_equal(a.pos, b.pos)


@given(rows=st.integers(2, 6), cols=st.integers(2, 6), spacing=st.floats(0.1, 10.0),
       steps=st.integers(1, 200))
def test_stays_finite_and_pins_exact(rows, cols, spacing, steps):
    state = cloth.new_mesh(rows, cols, spacing, "corners")
    pins = state.pins
    cloth.step(state, steps)
    assert np.all(np.isfinite(state.pos))
    for v, p in pins.items():
        assert np.array_equal(state.pos[:, v], p)


def test_snapshot_and_frame_outputs(tmp_path):
    state = cloth.gauze_mesh(5, 5)
    cloth.step(state, 100)
    path = cloth.write_snapshot_csv(state, tmp_path / "s.csv")
    rows = path.read_text().splitlines()
    assert rows[0] == "vertex_id,x,y,z,cut_degree"
    assert len(rows) == 26
    img = cloth.render_frame(state, 64)
    assert img.shape == (64, 64) and img.dtype == np.uint8 and img.max() > 0
    pgm = cloth.write_pgm(img, tmp_path / "f.pgm").read_bytes()
    assert pgm.startswith(b"P5\n64 64\n255\n") and len(pgm) == len(b"P5\n64 64\n255\n") + 64 * 64
