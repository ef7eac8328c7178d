import numpy as np
import pytest

from genret import rq
from genret.errors import ConfigurationError, DataFormatError


class TestKmeans:
    def test_energy_non_increasing(self):
        rng = np.random.default_rng(0)
        pts = rng.normal(size=(200, 8))
        for k in (3, 10, 32):
            _, energies = rq.kmeans(pts, k, iters=15, rng=np.random.default_rng(1))
            assert all(b <= a + 1e-9 for a, b in zip(energies, energies[1:]))

    def test_fewer_points_than_clusters_permitted(self):
        rng = np.random.default_rng(2)
        pts = rng.normal(size=(3, 4))
        centroids, _ = rq.kmeans(pts, 8, iters=5, rng=np.random.default_rng(3))
        assert centroids.shape == (8, 4)
        assert np.isfinite(centroids).all()


class TestTrainCodebooks:
    def test_single_point_zero_distortion(self):
        emb = np.random.default_rng(4).normal(size=(1, 6))
        books = rq.train_codebooks(emb, L=3, V=4, iters=5, seed=0)
        codes = rq.encode(emb, books)
        rep = rq.distortion(emb, codes, books)
        assert all(m == pytest.approx(0.0, abs=1e-20) for m in rep.mse)

    def test_two_orthogonal_vectors_exact_fit(self):
        emb = np.array([[1.0, 0.0], [0.0, 1.0]])
        books = rq.train_codebooks(emb, L=1, V=2, iters=5, seed=1)
        codes = rq.encode(emb, books)
        assert codes[0, 0] != codes[1, 0]
        rep = rq.distortion(emb, codes, books)
        assert rep.mse[0] == pytest.approx(0.0, abs=1e-24)

    def test_distortion_decreases_with_levels(self):
        emb = np.random.default_rng(5).normal(size=(100, 16))
        books = rq.train_codebooks(emb, L=4, V=8, iters=20, seed=2)
        rep = rq.distortion(emb, rq.encode(emb, books), books)
        assert rep.mse[3] <= rep.mse[1] <= rep.mse[0]

    def test_deterministic_under_seed(self):
        emb = np.random.default_rng(6).normal(size=(50, 8))
        a = rq.train_codebooks(emb, L=2, V=4, iters=10, seed=9)
        b = rq.train_codebooks(emb, L=2, V=4, iters=10, seed=9)
        assert np.array_equal(a.books, b.books)

    def test_level_energies_recorded_per_level(self):
        emb = np.random.default_rng(7).normal(size=(30, 4))
        books = rq.train_codebooks(emb, L=3, V=4, iters=7, seed=0)
        assert len(books.level_energies) == 3
        assert all(len(e) == 7 for e in books.level_energies)


class TestEncodeAssign:
    def test_encode_matches_exhaustive_nearest(self):
        rng = np.random.default_rng(8)
        emb = rng.normal(size=(40, 6))
        books = rq.train_codebooks(emb, L=3, V=5, iters=10, seed=3)
        codes = rq.encode(emb, books)
        for i in range(40):
            residual = emb[i].copy()
            for level in range(3):
                d = ((books.books[level] - residual) ** 2).sum(axis=1)
                assert codes[i, level] == d.argmin()
                residual -= books.books[level][codes[i, level]]

    def test_single_document(self):
        emb = np.random.default_rng(9).normal(size=(1, 4))
        books = rq.train_codebooks(emb, L=2, V=3, iters=5, seed=0)
        dmap = rq.assign_docids(["only"], emb, books)
        assert list(dmap) == ["only"]

    def test_identical_embeddings_differ_in_final_position(self):
        rng = np.random.default_rng(10)
        base = rng.normal(size=(20, 8))
        books = rq.train_codebooks(base, L=3, V=4, iters=10, seed=1)
        emb = np.vstack([base[0], base[0]])
        dmap = rq.assign_docids(["a", "b"], emb, books)
        ca, cb = dmap["a"], dmap["b"]
        assert ca != cb
        assert ca[:-1] == cb[:-1]

    def test_uniqueness_is_injective(self):
        rng = np.random.default_rng(11)
        emb = rng.normal(size=(120, 8))
        # coarse code space (4^4 = 256 slots for 120 docs) forces collisions
        books = rq.train_codebooks(emb, L=4, V=4, iters=10, seed=2)
        dmap = rq.assign_docids([f"d{i}" for i in range(120)], emb, books)
        assert len(set(dmap.values())) == 120

    def test_too_many_documents_rejected(self):
        emb = np.random.default_rng(12).normal(size=(10, 4))
        books = rq.train_codebooks(emb, L=1, V=3, iters=3, seed=0)
        with pytest.raises(ConfigurationError):
            rq.assign_docids([f"d{i}" for i in range(10)], emb, books)

    def test_same_topic_share_longer_prefixes(self, small_synth):
        # synthetic corpus: same-topic documents should share longer common
        # docid prefixes than cross-topic pairs on average
        corpus, _, _, teacher = small_synth
        emb = np.stack([teacher.doc_latents[d] for d in corpus.doc_ids])
        books = rq.train_codebooks(emb, L=4, V=8, iters=20, seed=5)
        dmap = rq.assign_docids(corpus.doc_ids, emb, books)
        topic = {d: i % 5 for i, d in enumerate(corpus.doc_ids)}
        same, cross = [], []
        ids = corpus.doc_ids
        for i in range(len(ids)):
            for j in range(i + 1, len(ids)):
                a, b = dmap[ids[i]], dmap[ids[j]]
                lcp = 0
                for x, y in zip(a, b):
                    if x != y:
                        break
                    lcp += 1
                (same if topic[ids[i]] == topic[ids[j]] else cross).append(lcp)
        assert np.mean(same) > np.mean(cross)


class TestApproximate:
    def test_prefix_one_is_first_table_row(self):
        emb = np.random.default_rng(13).normal(size=(20, 4))
        books = rq.train_codebooks(emb, L=3, V=4, iters=5, seed=0)
        codes = rq.encode(emb, books)[0]
        out = rq.approximate(codes, books, 1)
        assert np.array_equal(out, books.books[0][codes[0]])

    def test_zero_codebooks_give_zero_vector(self):
        books = rq.Codebooks(books=np.zeros((3, 4, 5)), level_energies=[])
        assert np.array_equal(rq.approximate([1, 2, 3], books, 3), np.zeros(5))

    def test_full_approximation_matches_distortion_entry(self):
        rng = np.random.default_rng(14)
        emb = rng.normal(size=(30, 6))
        books = rq.train_codebooks(emb, L=3, V=4, iters=10, seed=1)
        codes = rq.encode(emb, books)
        rep = rq.distortion(emb, codes, books)
        mse = np.mean(
            [((emb[i] - rq.approximate(codes[i], books, 3)) ** 2).sum() for i in range(30)]
        )
        assert mse == pytest.approx(rep.mse[2], rel=1e-12)

    def test_bad_prefix_len_rejected(self):
        books = rq.Codebooks(books=np.zeros((2, 3, 4)), level_energies=[])
        with pytest.raises(ConfigurationError):
            rq.approximate([0, 0], books, 0)
        with pytest.raises(ConfigurationError):
            rq.approximate([0, 0], books, 3)

    def test_code_out_of_range_rejected(self):
        books = rq.Codebooks(books=np.zeros((2, 3, 4)), level_energies=[])
        with pytest.raises(DataFormatError):
            rq.approximate([0, 5], books, 2)


class TestDistortion:
    def test_utilization_partitions_documents(self):
        rng = np.random.default_rng(15)
        emb = rng.normal(size=(64, 8))
        books = rq.train_codebooks(emb, L=3, V=6, iters=10, seed=4)
        rep = rq.distortion(emb, rq.encode(emb, books), books)
        assert rep.utilization.shape == (3, 6)
        assert (rep.utilization.sum(axis=1) == 64).all()

    def test_mse_non_increasing_random_instance(self):
        rng = np.random.default_rng(16)
        emb = rng.normal(size=(128, 12))
        books = rq.train_codebooks(emb, L=6, V=5, iters=15, seed=6)
        rep = rq.distortion(emb, rq.encode(emb, books), books)
        assert all(b <= a + 1e-12 for a, b in zip(rep.mse, rep.mse[1:]))

    def test_dimension_mismatch_rejected(self):
        books = rq.Codebooks(books=np.zeros((2, 3, 4)), level_energies=[])
        with pytest.raises(DataFormatError):
            rq.distortion(np.zeros((5, 4)), np.zeros((5, 3), dtype=int), books)
