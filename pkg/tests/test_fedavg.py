import numpy as np
import pytest

from conftest import desk_config, small_config
from fedhet.commcost import cost_fedavg
from fedhet.experiment import prepare
from fedhet.fedavg import FedAvgConfig, fedavg_aggregate
from fedhet.errors import InputError
from fedhet.harness import run_protocol
from fedhet.nn import ModelSpec, conv, dense, flatten, init_model, relu, train
from fedhet.seeding import SeedBook

SPEC = ModelSpec((1, 4, 4), (conv(2, 2), relu(), flatten(), dense(3)))


def loop_average(models, counts):
    total = sum(counts)
    out = []
    for li, lp in enumerate(models[0].params):
        layer = []
        for pi, p in enumerate(lp):
            avg = np.zeros(p.shape)
            for idx in np.ndindex(p.shape):
                s = 0.0
                for m, c in zip(models, counts):
                    s = s + (c / total) * m.params[li][pi][idx]
                avg[idx] = s
            layer.append(avg)
        out.append(layer)
    return out


def assert_params_equal(model, params):
    for lp, ref in zip(model.params, params):
        for a, b in zip(lp, ref):
            assert np.array_equal(a, b)


def test_copies_average_to_themselves():
    m = init_model(SPEC, 0)
    avg = fedavg_aggregate([m, m, m], [1, 1, 1])
    np.testing.assert_allclose(avg.flat_params(), m.flat_params(), rtol=1e-15, atol=0)
    # powers-of-two weights make the average exact
    assert np.array_equal(fedavg_aggregate([m, m], [1, 1]).flat_params(), m.flat_params())


def test_one_to_three_weighting():
    a, b = init_model(SPEC, 1), init_model(SPEC, 2)
    avg = fedavg_aggregate([a, b], [1, 3])
    assert_params_equal(avg, loop_average([a, b], [1, 3]))
    np.testing.assert_allclose(avg.flat_params(), 0.25 * a.flat_params() + 0.75 * b.flat_params(), rtol=1e-15)


def test_equal_counts_give_plain_mean():
    models = [init_model(SPEC, s) for s in range(4)]
    np.testing.assert_allclose(fedavg_aggregate(models, [5] * 4).flat_params(),
                               np.mean([m.flat_params() for m in models], axis=0), rtol=1e-14)


def test_aggregate_rejects_mixed_specs_and_bad_counts():
    other = init_model(ModelSpec((16,), (dense(3),)), 0)
    with pytest.raises(InputError):
        fedavg_aggregate([init_model(SPEC, 0), other], [1, 1])
    with pytest.raises(InputError):
        fedavg_aggregate([init_model(SPEC, 0)], [0])
    with pytest.raises(InputError):
        fedavg_aggregate([init_model(SPEC, 0)], [1, 2])


@pytest.mark.parametrize("seed", range(5))
def test_aggregation_commutes_with_client_order(seed):
    r = np.random.default_rng(seed)
    models = [init_model(SPEC, int(s)) for s in r.integers(0, 1000, 4)]
    counts = [int(c) for c in r.integers(1, 50, 4)]
    perm = r.permutation(4)
    a = fedavg_aggregate(models, counts)
    b = fedavg_aggregate([models[i] for i in perm], [counts[i] for i in perm])
    np.testing.assert_allclose(a.flat_params(), b.flat_params(), rtol=1e-13, atol=1e-15)


def test_config_validation():
    with pytest.raises(InputError):
        FedAvgConfig(0, 1, 1, SPEC)


# -- runs ------------------------------------------------------------------------

def test_single_client_equals_centralized_training():
    cfg = small_config("fedavg", scheme={"kind": "IID", "n_clients": 1})
    result = run_protocol(cfg)
    seeds = SeedBook(cfg.master_seed)
    prep = prepare(cfg, seeds)
    spec = ModelSpec.preset("tiny", prep.input_shape, prep.n_classes, hidden=cfg.client_model.hidden)
    model = init_model(spec, seeds("fedavg", "init"))
    data = prep.clients[0]
    for r in range(1, cfg.experiment.rounds + 1):
        model = train(model, data.features, data.labels, cfg.local.with_seed(seeds("fedavg", "round", r, "client", 0)))
    assert np.array_equal(result.artifacts["global_model"].flat_params(), model.flat_params())


def test_round_messages_and_cost():
    cfg = small_config("fedavg")
    result = run_protocol(cfg)
    p = result.value("model_params", stage="summary")
    rounds = cfg.experiment.rounds
    assert len(result.transcript.uplinks()) == len(result.transcript.downlinks()) == 3 * rounds
    assert result.value("comm_cost", stage="summary") == result.transcript.total() == cost_fedavg(p, p, rounds, 3)
    per_round = [result.value("cumulative_comm_cost", stage=f"round{r}") for r in range(1, rounds + 1)]
    assert per_round == [cost_fedavg(p, p, r, 3) for r in range(1, rounds + 1)]


def fedavg_desk(kind, seed):
    return run_protocol(desk_config("fedavg", seed, scheme={"kind": kind},
                                    experiment={"rounds": 5}, local={"epochs": 2}))


@pytest.mark.slow
@pytest.mark.parametrize("seed", range(3))
def test_iid_accuracy_improves_over_rounds(seed):
    r = fedavg_desk("IID", seed)
    assert r.value("accuracy", stage="round5") >= r.value("accuracy", stage="round1")


@pytest.mark.slow
def test_niid1_final_below_iid_final():
    iid, niid = fedavg_desk("IID", 0), fedavg_desk("NIID1", 0)
    assert niid.value("accuracy", stage="summary") < iid.value("accuracy", stage="summary")
