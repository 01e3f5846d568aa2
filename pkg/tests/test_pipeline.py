import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from voxelseg._errors import CentroidOutOfBounds, MissingSDM, NoCentroidsFound, TargetMissing
from voxelseg.phantom import PhantomConfig, generate_phantom
from voxelseg.pipeline import (
    OracleDentitionPredictor,
    OracleMode,
    OracleOffsetPredictor,
    PipelineConfig,
    PredictorOutput,
    build_prompt_patch,
    fuse_single_tooth,
    make_oracle_predictor,
    remap_multilabel,
    run_oracle_case,
    run_pipeline,
    stitch_instances,
)
from voxelseg.volume import VoxelVolume, extract_patch

SMALL = PipelineConfig(patch_size=32)


@pytest.fixture(scope="module")
def case():
    return generate_phantom(PhantomConfig(tooth_count=4, seed=3))


def _patch(case, k, cfg=SMALL):
    return build_prompt_patch(case.image, case.centroids[k - 1], cfg)


def _gt(case, patch):
    centre = np.asarray(patch.lo) + np.asarray(patch.shape) // 2
    return extract_patch(case.labels, centre, patch.shape).data


def test_config_rules():
    with pytest.raises(ValueError):
        PipelineConfig(patch_size=15)
    with pytest.raises(ValueError):
        PipelineConfig(patch_size=(32, 32, 30 + 1))
    with pytest.raises(ValueError):
        PipelineConfig(prompt_radius=0)
    cfg = PipelineConfig.for_variant("C", patch_size=48)
    assert cfg.variant == "C" and cfg.patch_size == (48, 48, 48)
    assert PipelineConfig.from_json(cfg.to_json()) == cfg
    assert PipelineConfig().variant == "CMS"


def test_oracle_mode_parse():
    assert OracleMode.parse("perfect") == OracleMode()
    assert OracleMode.parse("noisy(0.5, 1.0)", seed=2) == OracleMode("noisy", 0.5, 1.0, 0.0, 2)
    assert OracleMode.parse("adhesion(0.8)").grow_mm == 0.8
    with pytest.raises(ValueError):
        OracleMode.parse("wobbly")


def test_prompt_ball_radius_one(case):
    p = _patch(case, 2, PipelineConfig(patch_size=32, prompt_radius=1))
    assert p.prompt.data.sum() == 7
    assert p.prompt.data.max() == 1 and p.prompt.data.min() == 0
    assert p.prompt.data[16, 16, 16] == 1
    assert p.stack().shape == (2, 32, 32, 32)
    assert 0 <= p.intensity.data.min() and p.intensity.data.max() <= 1


def test_prompt_patch_at_corner(case):
    corner = case.image.index_to_phys((0, 0, 0))
    p = build_prompt_patch(case.image, corner, SMALL)
    assert p.lo == (-16, -16, -16)
    assert np.all(p.intensity.data[:16] == 0)
    assert p.prompt.data[16, 16, 16] == 1


def test_prompt_patch_outside(case):
    far = case.image.index_to_phys(np.asarray(case.image.dims) + 5)
    with pytest.raises(CentroidOutOfBounds):
        build_prompt_patch(case.image, far, SMALL)


def test_prompt_toggle_off(case):
    p = _patch(case, 1, PipelineConfig.for_variant("B", patch_size=32))
    assert not p.prompt.data.any()


def test_remap_counts():
    lab = np.zeros((6, 4, 4), np.uint16)
    lab[0:2] = 6
    lab[2:4, :2] = 7
    lab[4:6, :3] = 8
    out = remap_multilabel(lab, 7).data
    assert (out == 2).sum() == (lab == 6).sum() + (lab == 8).sum()
    assert np.array_equal(out == 1, lab == 7)
    assert set(np.unique(remap_multilabel(np.where(lab == 7, 7, 0), 7).data)) == {0, 1}
    with pytest.raises(TargetMissing):
        remap_multilabel(lab, 5)


def test_perfect_oracle_matches_remap(case):
    patch = _patch(case, 2)
    out = make_oracle_predictor(case).predict(patch)
    want = remap_multilabel(_gt(case, patch), 2).data
    assert np.array_equal(np.argmax(out.probabilities, axis=0), want)
    assert np.array_equal(fuse_single_tooth(out, SMALL), want == 1)


def test_noisy_zero_equals_perfect(case):
    patch = _patch(case, 3)
    a = make_oracle_predictor(case, "perfect").predict(patch)
    b = make_oracle_predictor(case, "noisy(0, 0)").predict(patch)
    assert a.probabilities.tobytes() == b.probabilities.tobytes()
    assert a.sdm.tobytes() == b.sdm.tobytes()


def test_noisy_is_seeded(case):
    patch = _patch(case, 3)
    a = make_oracle_predictor(case, OracleMode("noisy", 0.5, seed=1)).predict(patch)
    b = make_oracle_predictor(case, OracleMode("noisy", 0.5, seed=1)).predict(patch)
    c = make_oracle_predictor(case, OracleMode("noisy", 0.5, seed=2)).predict(patch)
    assert np.array_equal(a.probabilities, b.probabilities)
    assert not np.array_equal(a.probabilities, c.probabilities)


def test_adhesion_creates_ambiguity():
    case = generate_phantom(PhantomConfig(tooth_count=4, gap_mm=0.6, seed=0))
    pred = make_oracle_predictor(case, "adhesion(0.8)")
    patch = _patch(case, 2)
    out = pred.predict(patch)
    gt = _gt(case, patch)
    P = out.probabilities
    interdental = (gt == 0) & (P[1] > 0.1) & (P[2] > 0.1)
    assert interdental.any()
    assert np.any(np.abs(P[1] - P[2])[interdental] < 0.2)


def test_shape_trims_adhesion_spill():
    case = generate_phantom(PhantomConfig(tooth_count=4, gap_mm=0.6, seed=0))
    patch = _patch(case, 2)
    target = _gt(case, patch) == 2
    on = fuse_single_tooth(make_oracle_predictor(case, "adhesion(0.8)", shape=True).predict(patch), SMALL)
    off_cfg = PipelineConfig.for_variant("CM", patch_size=32)
    off = fuse_single_tooth(make_oracle_predictor(case, "adhesion(0.8)", shape=False).predict(patch), off_cfg)
    assert (on & ~target).sum() < (off & ~target).sum()


def test_fuse_edge_cases():
    p = np.zeros((3, 2, 2, 2))
    p[0] = 1
    out = PredictorOutput(p, np.zeros((2, 2, 2)))
    assert not fuse_single_tooth(out, SMALL).any()
    with pytest.raises(MissingSDM):
        fuse_single_tooth(PredictorOutput(p), SMALL)
    with pytest.raises(ValueError):
        PredictorOutput(np.full((3, 2, 2, 2), 0.5))


@given(hnp.arrays(np.float64, (3, 3, 3, 2), elements=st.floats(0, 1)),
       hnp.arrays(np.float64, (3, 3, 2), elements=st.floats(-2, 2)), st.booleans(), st.booleans())
def test_fuse_never_claims_zero_probability(raw, sdm, multilabel, shape):
    raw = raw + 1e-3
    p = raw / raw.sum(axis=0)
    p[1][raw[1] < 0.2] = 0
    p = p / p.sum(axis=0)
    cfg = PipelineConfig(patch_size=16, multilabel=multilabel, shape=shape)
    mask = fuse_single_tooth(PredictorOutput(p, sdm), cfg)
    assert np.all(p[1][mask] > 0)


def test_stitch_rules():
    a = np.zeros((4, 4, 4), bool)
    b = np.zeros_like(a)
    a[0] = True
    b[3] = True
    lab, conflicts = stitch_instances([(1, a, 0.9), (2, b, 0.9)])
    assert conflicts == 0 and np.array_equal(lab > 0, a | b)
    b[0, 0, 0] = True
    sa = np.full(a.shape, 0.6)
    sb = np.full(a.shape, 0.9)
    lab, conflicts = stitch_instances([(1, a, sa), (2, b, sb)])
    assert conflicts == 1 and lab[0, 0, 0] == 2
    lab, _ = stitch_instances([(2, b, 0.7), (1, a, 0.7)])
    assert lab[0, 0, 0] == 1


@given(st.lists(hnp.arrays(bool, (3, 3, 3)), min_size=1, max_size=4),
       st.lists(st.floats(0, 1), min_size=4, max_size=4))
def test_stitch_conserves_union(masks, strengths):
    items = [(i + 1, m, strengths[i]) for i, m in enumerate(masks)]
    lab, conflicts = stitch_instances(items)
    union = np.any(masks, axis=0)
    assert np.array_equal(lab > 0, union)
    assert sum(int((lab == i + 1).sum()) for i in range(len(masks))) == union.sum()
    assert conflicts == int((np.sum(masks, axis=0) >= 2).sum())


def test_pipeline_closure_small(case):
    result, report = run_oracle_case(case, PipelineConfig())
    assert report.mean_dice == 1.0 and report.mean_hd == 0.0
    assert result.conflicts == 0 and not report.misses and not report.spurious


def test_pipeline_noisy_dice():
    case = generate_phantom(PhantomConfig(tooth_count=3, grid_shape=(96, 96, 96), seed=0))
    _, report = run_oracle_case(case, PipelineConfig(), OracleMode("noisy", 0.5, seed=0))
    assert min(m.overlap.dice for m in report.matches) >= 0.95


def test_pipeline_b_vs_cms_on_adhesion():
    case = generate_phantom(PhantomConfig(tooth_count=5, seed=4))
    mode = OracleMode("adhesion", grow_mm=0.8)
    rb, b = run_oracle_case(case, PipelineConfig.for_variant("B"), mode)
    rc, c = run_oracle_case(case, PipelineConfig.for_variant("CMS"), mode)
    assert c.mean_dice > b.mean_dice
    assert rc.conflicts == 0 and rb.conflicts > 0


def test_pipeline_deterministic_across_threads(case):
    mode = OracleMode("noisy", 0.4, seed=7)
    outs = [run_oracle_case(case, PipelineConfig(threads=t), mode)[0].labels.data.tobytes() for t in (1, 4, 1)]
    assert outs[0] == outs[1] == outs[2]


def test_pipeline_no_foreground():
    case = generate_phantom(PhantomConfig(tooth_count=1, seed=0))
    empty = case.labels.with_data(np.zeros_like(case.labels.data))
    blank = type(case)(case.image, empty, [], [])
    with pytest.raises(NoCentroidsFound):
        run_pipeline(case.image, OracleDentitionPredictor(blank), OracleOffsetPredictor(blank),
                     make_oracle_predictor(blank), PipelineConfig())
