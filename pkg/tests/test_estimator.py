import numpy as np
import pytest
from sklearn.base import clone

from tomonet import dataset as D
from tomonet.estimator import CnnTomography, StokesReconstructor, check_grids, check_states, check_targets
from tomonet.exceptions import ValidationError
from tomonet.training import evaluate


@pytest.fixture(scope="module")
def data():
    return D.generate(D.DatasetConfig(n_states=3, noisy_per_state=10, train_per_state=8, master_seed=4))


class TestValidation:
    def test_flat_grids_accepted(self):
        assert check_grids(np.zeros((2, 36))).shape == (2, 6, 6)

    @pytest.mark.parametrize("bad", [np.zeros((2, 5, 6)), np.zeros(36), np.full((1, 6, 6), np.nan)])
    def test_bad_grids(self, bad):
        with pytest.raises(ValidationError):
            check_grids(bad)

    def test_states_count(self):
        with pytest.raises(ValidationError):
            check_states(np.zeros((2, 4, 4)), 3)
        assert check_states(np.eye(4) / 4).shape == (1, 4, 4)

    def test_targets_from_states(self, data):
        np.testing.assert_allclose(check_targets(data.train.references[:3], 3), data.train.targets[:3], atol=1e-12)

    def test_bad_targets(self):
        with pytest.raises(ValidationError):
            check_targets(np.zeros((3, 15)), 3)


class TestStokesReconstructor:
    def test_params_and_clone(self):
        est = StokesReconstructor(physical=False)
        assert est.get_params() == {"physical": False}
        assert clone(est).get_params() == {"physical": False}

    def test_noiseless_is_exact(self, data):
        ds = D.generate_noiseless_random(12, 1)
        est = StokesReconstructor().fit(ds.train.grids)
        assert est.score(ds.train.grids, ds.train.references) > 1 - 1e-9
        assert est.score(ds.train.grids, ds.train.targets) > 1 - 1e-9

    def test_transform_shape(self, data):
        assert StokesReconstructor().fit().transform(data.test.grids).shape == (len(data.test), 4, 4)

    def test_physical_flag(self, data):
        raw = StokesReconstructor(physical=False).predict(data.test.grids)
        phys = StokesReconstructor().predict(data.test.grids)
        assert np.linalg.eigvalsh(phys).min() > -1e-12
        np.testing.assert_allclose(raw, raw.conj().transpose(0, 2, 1), atol=1e-14)


class TestCnnTomography:
    def test_get_params_and_clone(self):
        est = CnnTomography(epochs=3, random_state=8)
        p = clone(est).get_params()
        assert p["epochs"] == 3 and p["random_state"] == 8 and p["learning_rate"] == 0.008

    def test_unfitted(self, data):
        from sklearn.exceptions import NotFittedError

        with pytest.raises(NotFittedError):
            CnnTomography().predict(data.test.grids)

    def test_fit_predict_score(self, data):
        est = CnnTomography(epochs=2, random_state=1)
        est.fit(data.train.grids, data.train.targets, eval_set=(data.test.grids, data.test.references))
        rho = est.predict(data.test.grids)
        assert rho.shape == (len(data.test), 4, 4)
        assert len(est.history_) == 2
        fids, _ = evaluate(est.params_, data.test.grids, data.test.references)
        assert est.score(data.test.grids, data.test.references) == pytest.approx(np.mean(fids))
        assert est.history_.test_fidelity[-1] == pytest.approx(np.mean(fids))

    def test_fit_on_density_targets_matches_tau16(self, data):
        a = CnnTomography(epochs=1).fit(data.train.grids, data.train.targets)
        b = CnnTomography(epochs=1).fit(data.train.grids.reshape(-1, 36), data.train.references)
        np.testing.assert_allclose(a.params_.values, b.params_.values, atol=1e-12)

    def test_warm_start_continues(self, data):
        est = CnnTomography(epochs=1, warm_start=True).fit(data.train.grids, data.train.targets)
        first = est.params_.step
        est.fit(data.train.grids, data.train.targets)
        assert est.params_.step == 2 * first

    def test_cold_refit_restarts(self, data):
        est = CnnTomography(epochs=1).fit(data.train.grids, data.train.targets)
        est.fit(data.train.grids, data.train.targets)
        assert est.params_.step == len(data.train) // 4

    def test_checkpoint_roundtrip(self, data, tmp_path):
        est = CnnTomography(epochs=1).fit(data.train.grids, data.train.targets)
        est.save(tmp_path / "m.ckpt")
        back = CnnTomography.from_checkpoint(tmp_path / "m.ckpt")
        np.testing.assert_array_equal(back.predict_tau16(data.test.grids), est.predict_tau16(data.test.grids))

    def test_wrong_input_width(self, data):
        est = CnnTomography(epochs=1).fit(data.train.grids, data.train.targets)
        with pytest.raises(ValidationError):
            est.predict(np.zeros((2, 2, 2)))
