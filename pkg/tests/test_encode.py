import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from eralign.data import FeatureMatrix
from eralign.encode import (
    Codebook,
    CodebookMode,
    EncodingScheme,
    GmmModel,
    assignments,
    bow_counts,
    compute_idf,
    distortion,
    encode_bow,
    encode_fv,
    fisher_vector_raw,
    gmm_log_likelihood,
    train_codebook,
    train_gmm,
    whiten,
    whiten_rows,
)
from eralign.errors import (
    InsufficientDataError,
    InvalidEigenvaluesError,
    InvalidInputError,
)
from eralign.util import make_rng, signed_sqrt


def blobs(rng, centers, per_center, spread=0.3):
    rows = np.vstack([
        center + rng.normal(scale=spread, size=(per_center, len(center)))
        for center in centers])
    return FeatureMatrix.create(rows)


# --- k-means vocabulary -------------------------------------------------------


def test_kmeans_separated_clusters():
    data = FeatureMatrix.create(np.array([[0.0], [0.0], [0.0], [10.0], [10.0], [10.0]]))
    cb = train_codebook(data, 2, seed=0)
    assert sorted(np.round(cb.centers.ravel(), 6)) == [0.0, 10.0]


def test_kmeans_k_equals_n():
    rng = make_rng(0)
    data = FeatureMatrix.create(rng.normal(size=(5, 3)))
    cb = train_codebook(data, 5, seed=1)
    assert distortion(data, cb) == pytest.approx(0.0, abs=1e-20)


def test_kmeans_insufficient_data():
    with pytest.raises(InsufficientDataError):
        train_codebook(FeatureMatrix.create(np.zeros((2, 2))), 3)


def test_kmeans_close_to_multirestart_oracle():
    rng = make_rng(13)
    data = blobs(rng, [np.zeros(4), np.full(4, 4.0), np.array([4.0, -4.0, 0.0, 0.0])], 40)
    cb = train_codebook(data, 3, seed=0)
    best = np.inf
    for restart in range(20):
        best = min(best, distortion(data, train_codebook(data, 3, seed=100 + restart)))
    assert distortion(data, cb) <= best * 1.05


def test_kmeans_distortion_monotone_across_lloyd_iterations():
    # re-run Lloyd manually from the same init and track distortion
    from scipy.spatial import cKDTree

    rng = make_rng(3)
    data = blobs(rng, [np.zeros(3), np.full(3, 2.5)], 60, spread=0.8)
    rows = np.asarray(data.rows, float)
    from eralign.encode import _kmeans_pp_init

    centers = _kmeans_pp_init(rows, 4, make_rng(0))
    last = np.inf
    for _ in range(30):
        _, idx = cKDTree(centers).query(rows, k=1)
        value = float(np.sum((rows - centers[idx]) ** 2))
        assert value <= last + 1e-9
        last = value
        for j in range(4):
            members = rows[idx == j]
            if members.shape[0]:
                centers[j] = members.mean(axis=0)


def test_approximate_assignments_agree_with_exact():
    rng = make_rng(17)
    data = blobs(rng, [rng.normal(size=8) * 3 for _ in range(12)], 80, spread=0.6)
    cb = train_codebook(data, 12, CodebookMode.EXACT, seed=0)
    exact = assignments(data, cb, CodebookMode.EXACT)
    approx = assignments(data, cb, CodebookMode.APPROXIMATE)
    agreement = np.mean(exact == approx)
    assert agreement >= 0.95


# --- BOW ------------------------------------------------------------------------


def test_bow_single_center_hit():
    cb = Codebook(centers=np.array([[0.0], [5.0], [10.0]]))
    descs = FeatureMatrix.create(np.array([[0.1], [-0.2], [0.05]]))
    vec = encode_bow(descs, cb)
    assert np.allclose(vec.values, [1.0, 0.0, 0.0])
    assert vec.scheme is EncodingScheme.BOW


def test_bow_counts_sum_equals_descriptor_count(rng):
    cb = Codebook(centers=rng.normal(size=(4, 3)))
    descs = FeatureMatrix.create(rng.normal(size=(25, 3)))
    assert bow_counts(descs, cb).sum() == 25


def test_bow_matches_brute_force_assignment():
    rng = make_rng(5)
    cb = Codebook(centers=rng.normal(size=(3, 2)))
    descs = FeatureMatrix.create(rng.normal(size=(5, 2)))
    expected = np.zeros(3)
    for row in descs.rows:
        expected[np.argmin([np.linalg.norm(row - c) for c in cb.centers])] += 1
    assert np.allclose(bow_counts(descs, cb), expected)
    vec = encode_bow(descs, cb)
    ref = np.sqrt(expected)
    assert np.allclose(vec.values, ref / np.linalg.norm(ref))


def test_bow_term_in_every_document_zeroed_by_idf():
    cb = Codebook(centers=np.array([[0.0], [10.0]]))
    docs = [FeatureMatrix.create(np.array([[0.1], [9.9]])),
            FeatureMatrix.create(np.array([[0.2], [10.2]]))]
    idf = compute_idf([bow_counts(d, cb) for d in docs])
    assert idf[0] == 0.0 and idf[1] == 0.0
    vec = encode_bow(docs[0], cb, idf)
    assert vec.degenerate and np.allclose(vec.values, 0.0)


def test_idf_formula():
    n_docs = 8
    hists = [np.array([1.0, 0.0]) for _ in range(n_docs)]
    for h in hists[:3]:
        h[1] = 2.0
    idf = compute_idf(hists)
    assert idf[0] == pytest.approx(0.0)
    assert idf[1] == pytest.approx(np.log(8 / 3))


def test_idf_unmatched_term_is_zero():
    idf = compute_idf([np.array([3.0, 0.0]), np.array([1.0, 0.0])])
    assert idf[1] == 0.0


# --- GMM -------------------------------------------------------------------------


def test_gmm_single_component_closed_form():
    rng = make_rng(1)
    rows = rng.normal(loc=2.0, scale=1.5, size=(200, 3))
    gmm = train_gmm(FeatureMatrix.create(rows), 1, seed=0)
    assert gmm.weights[0] == pytest.approx(1.0)
    assert np.allclose(gmm.means[0], rows.mean(axis=0), atol=1e-9)
    assert np.allclose(gmm.variances[0], rows.var(axis=0), rtol=1e-6)


def test_gmm_recovers_separated_components():
    rng = make_rng(2)
    a = rng.normal(loc=0.0, scale=0.5, size=(300, 2))
    b = rng.normal(loc=5.0, scale=0.5, size=(300, 2))
    gmm = train_gmm(FeatureMatrix.create(np.vstack([a, b])), 2, seed=0)
    means = gmm.means[np.argsort(gmm.means[:, 0])]
    assert np.max(np.abs(means[0] - 0.0)) < 0.1
    assert np.max(np.abs(means[1] - 5.0)) < 0.1


def test_gmm_loglik_non_decreasing():
    rng = make_rng(3)
    rows = np.vstack([rng.normal(size=(150, 2)),
                      rng.normal(loc=4.0, size=(150, 2))])
    data = FeatureMatrix.create(rows)
    previous = -np.inf
    for iters in (1, 2, 4, 8, 16):
        import eralign.encode as enc

        saved = enc.GMM_MAX_ITERS
        enc.GMM_MAX_ITERS = iters
        try:
            gmm = train_gmm(data, 2, seed=0)
        finally:
            enc.GMM_MAX_ITERS = saved
        ll = gmm_log_likelihood(rows, gmm)
        assert ll >= previous - 1e-9
        previous = ll


def test_gmm_insufficient_data():
    with pytest.raises(InsufficientDataError):
        train_gmm(FeatureMatrix.create(np.zeros((3, 2))), 3)


# --- Fisher vectors ----------------------------------------------------------------


def test_fv_dimension_is_2kd():
    rng = make_rng(4)
    gmm = train_gmm(FeatureMatrix.create(rng.normal(size=(120, 5))), 3, seed=0)
    vec = encode_fv(FeatureMatrix.create(rng.normal(size=(30, 5))), gmm)
    assert vec.values.shape == (2 * 3 * 5,)
    assert np.linalg.norm(vec.values) == pytest.approx(1.0, abs=1e-8)


def test_fv_zero_mean_gradient_at_component_means():
    means = np.array([[0.0, 0.0], [30.0, 30.0]])
    gmm = GmmModel(weights=np.array([0.25, 0.75]), means=means,
                   variances=np.full((2, 2), 0.5))
    descriptors = FeatureMatrix.create(np.vstack([means[0:1], np.repeat(means[1:2], 3, axis=0)]))
    raw = fisher_vector_raw(descriptors, gmm)
    mean_block = raw[:4]
    assert np.max(np.abs(mean_block)) <= 1e-8


def test_fv_empty_descriptors_degenerate():
    gmm = GmmModel(weights=np.array([1.0]), means=np.zeros((1, 2)),
                   variances=np.ones((1, 2)))
    vec = encode_fv(FeatureMatrix.create(np.zeros((0, 2))), gmm)
    assert vec.degenerate and np.allclose(vec.values, 0.0)
    assert vec.values.shape == (4,)


def test_fv_matches_finite_difference_gradients():
    """Oracle: numeric gradient of the total log-likelihood in mu and sigma."""
    rng = make_rng(6)
    gmm = GmmModel(
        weights=np.array([0.4, 0.6]),
        means=np.array([[0.0, 1.0], [2.0, -1.0]]),
        variances=np.array([[0.8, 1.2], [0.5, 0.9]]),
    )
    rows = rng.normal(size=(5, 2))
    data = FeatureMatrix.create(rows)
    raw = fisher_vector_raw(data, gmm)
    n, k, d = 5, 2, 2

    def total_ll(means, sigmas):
        model = GmmModel(weights=gmm.weights, means=means, variances=sigmas**2)
        return gmm_log_likelihood(rows, model) * n

    step = 1e-5
    sigmas = np.sqrt(gmm.variances)
    for comp in range(k):
        for dim in range(d):
            mu_hi, mu_lo = gmm.means.copy(), gmm.means.copy()
            mu_hi[comp, dim] += step
            mu_lo[comp, dim] -= step
            grad_mu = (total_ll(mu_hi, sigmas) - total_ll(mu_lo, sigmas)) / (2 * step)
            expected = sigmas[comp, dim] * grad_mu / (n * np.sqrt(gmm.weights[comp]))
            got = raw[comp * d + dim]
            assert got == pytest.approx(expected, rel=1e-3)

            sg_hi, sg_lo = sigmas.copy(), sigmas.copy()
            sg_hi[comp, dim] += step
            sg_lo[comp, dim] -= step
            grad_sg = (total_ll(gmm.means, sg_hi) - total_ll(gmm.means, sg_lo)) / (2 * step)
            expected = sigmas[comp, dim] * grad_sg / (n * np.sqrt(2 * gmm.weights[comp]))
            got = raw[k * d + comp * d + dim]
            assert got == pytest.approx(expected, rel=1e-3)


@settings(max_examples=50, deadline=None)
@given(arrays(np.float64, 6, elements=st.floats(-10, 10)))
def test_signed_sqrt_preserves_sign(values):
    out = signed_sqrt(values)
    assert np.all(np.sign(out) == np.sign(values))


# --- whitening -----------------------------------------------------------------


def test_whiten_unit_variances():
    rng = make_rng(7)
    eig = np.array([4.0, 1.0, 0.25])
    rows = rng.normal(size=(5000, 3))
    rows = (rows - rows.mean(axis=0)) / rows.std(axis=0) * np.sqrt(eig)
    assert np.allclose(rows.var(axis=0), eig, rtol=1e-12)
    scaled = rows / np.sqrt(eig)
    assert np.allclose(scaled.var(axis=0), 1.0, atol=1e-6)
    out = whiten_rows(rows, eig)
    assert np.allclose(np.linalg.norm(out, axis=1), 1.0)


def test_whiten_all_ones_is_renorm_only(rng):
    rows = rng.normal(size=(10, 4))
    out = whiten_rows(rows, np.ones(4))
    expected = rows / np.linalg.norm(rows, axis=1, keepdims=True)
    assert np.allclose(out, expected)


def test_whiten_matches_direct_formula(rng):
    rows = rng.normal(size=(6, 3))
    eig = np.array([2.0, 0.5, 0.125])
    scaled = rows / np.sqrt(eig)
    expected = scaled / np.linalg.norm(scaled, axis=1, keepdims=True)
    assert np.allclose(whiten_rows(rows, eig), expected)


def test_whiten_rejects_nonpositive_eigenvalues(rng):
    fm = FeatureMatrix.create(rng.normal(size=(4, 2)))
    with pytest.raises(InvalidEigenvaluesError):
        whiten(fm, np.array([1.0, 0.0]))


def test_whiten_preserves_metadata(rng):
    fm = FeatureMatrix.create(rng.normal(size=(4, 2)), labels=["a", "b", "a", "b"])
    out = whiten(fm, np.array([1.0, 2.0]))
    assert out.ids == fm.ids and out.labels == fm.labels


def test_encoded_vector_norm_invariant(rng):
    with pytest.raises(InvalidInputError):
        from eralign.encode import EncodedVector

        EncodedVector(values=np.array([1.0, 1.0]), scheme=EncodingScheme.BOW)
