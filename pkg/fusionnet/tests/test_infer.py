import numpy as np

from fusionnet.config import ModelConfig, PhaseConfig, TrainConfig
from fusionnet.data import read_container
from fusionnet.infer import infer, predict, write_predictions
from fusionnet.model import build_model
from fusionnet.train import train

MICRO = ModelConfig(width_multiplier=1 / 16, stage_repeats=(1, 1, 1, 1, 1))


def test_predictions_file_layout(make_container, tmp_path):
    root = make_container(counts=(6, 0, 0, 0), seed=1)
    model = build_model(MICRO, seed=0)
    preds = predict(model, root)
    assert preds.shape == (6, 4096) and preds.dtype == np.float32
    assert np.isfinite(preds).all()

    path = tmp_path / "predictions.f32le"
    write_predictions(preds, str(path))
    assert path.stat().st_size == 6 * 4096 * 4
    assert np.array_equal(np.fromfile(path, dtype="<f4").reshape(6, 4096),
                          preds)


def test_predict_follows_split_order(make_container):
    root = make_container(counts=(10, 0, 0, 0), seed=2)
    c = read_container(root)
    model = build_model(MICRO, seed=0)
    all_preds = predict(model, root)
    test_preds = predict(model, root, split="test")
    assert test_preds.shape[0] == c.splits["test"].size
    # batching changes float accumulation order, so allow a small drift
    assert np.allclose(test_preds, all_preds[c.splits["test"]],
                       rtol=1e-4, atol=1e-5)


def test_single_modal_inference(make_container):
    root = make_container(counts=(4, 0, 0, 0), seed=3)
    model = build_model(ModelConfig(width_multiplier=1 / 16,
                                    stage_repeats=(1, 1, 1, 1, 1),
                                    single_modal=True), seed=0)
    preds = predict(model, root)
    assert preds.shape == (4, 4096)


def test_infer_end_to_end_and_training_helps(make_container, tmp_path):
    root = make_container(counts=(24, 0, 0, 0), seed=4)
    out = tmp_path / "run"
    model = build_model(MICRO, seed=0)
    untrained = predict(model, root, split="test")
    tc = TrainConfig(
        phase1=PhaseConfig(lr=1e-3, weight_decay=1e-4, epochs=6,
                           batch_size=8),
        phase2=PhaseConfig(lr=5e-4, weight_decay=5e-5, epochs=6,
                           batch_size=8))
    train(model, root, tc, seed=0, out_dir=str(out))

    pred_path = tmp_path / "predictions.f32le"
    n = infer(str(out / "model.pt"), root, str(pred_path), split="test")
    c = read_container(root)
    idx = c.splits["test"]
    assert n == idx.size
    trained = np.fromfile(pred_path, dtype="<f4").reshape(n, 4096)

    def mean_rie(batch):
        truth = c.truths[idx]
        num = np.linalg.norm(batch - truth, axis=1)
        den = np.linalg.norm(truth, axis=1)
        return float(np.mean(num / den))

    assert mean_rie(trained) < mean_rie(untrained)
