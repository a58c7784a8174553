import numpy as np
import pytest
import torch
from torch import nn

from tryon.errors import ConfigError, InputError
from tryon.imaging import RepresentationMode, build_representation
from tryon.synthesis import (
    ConstantColorSynthesizer,
    GarmentSynthesisNet,
    GsConfig,
    IdentityExtractor,
    LossBreakdown,
    MultiScaleDiscriminator,
    TorchSynthesizer,
    feature_matching_loss,
    gan_loss,
    gan_value,
    load_synthesizer,
    perceptual_loss,
    save_checkpoint,
    total_objective,
)

torch.manual_seed(0)


def tiny_net(mode="hybrid", roi=64):
    return GarmentSynthesisNet(GsConfig.tiny(mode, roi))


class TestGsForward:
    def test_output_shapes_split_garment_and_mask(self):
        net = tiny_net()
        g, m = net(torch.rand(2, 6, 64, 64))
        assert g.shape == (2, 3, 64, 64)
        assert m.shape == (2, 1, 64, 64)

    def test_shape_equivariant_across_input_sizes(self):
        net = tiny_net()
        with torch.no_grad():
            for side in (256, 512):
                g, m = net(torch.rand(1, 6, side, side))
                assert g.shape[-2:] == (side, side) and m.shape[-2:] == (side, side)

    def test_all_zero_input_finite_and_bounded(self):
        net = tiny_net()
        with torch.no_grad():
            g, m = net(torch.zeros(1, 6, 64, 64))
        assert torch.isfinite(g).all() and torch.isfinite(m).all()
        assert 0.0 <= float(m.min()) and float(m.max()) <= 1.0
        assert 0.0 <= float(g.min()) and float(g.max()) <= 1.0

    def test_eval_mode_deterministic(self):
        net = tiny_net().eval()
        x = torch.rand(1, 6, 64, 64)
        with torch.no_grad():
            a = net(x)
            b = net(x)
        assert torch.equal(a[0], b[0]) and torch.equal(a[1], b[1])

    def test_channel_mismatch_rejected(self):
        net = tiny_net(mode="vm")
        with pytest.raises(InputError):
            net(torch.rand(1, 6, 64, 64))

    def test_indivisible_dims_rejected(self):
        net = tiny_net()
        with pytest.raises(InputError):
            net(torch.rand(1, 6, 63, 63))


class TestGanLoss:
    def test_optimal_discriminator_value_zero(self):
        assert gan_value(1.0, 0.0) == pytest.approx(0.0, abs=1e-4)

    def test_half_half_value(self):
        assert gan_value(0.5, 0.5) == pytest.approx(-1.3863, abs=1e-4)

    def test_point_eight_point_three(self):
        assert gan_value(0.8, 0.3) == pytest.approx(-0.5798, abs=1e-4)

    def test_pair_directions(self):
        d_loss, g_loss = gan_loss(0.8, 0.3)
        # discriminator minimizes -L_GAN; generator minimizes the fake term
        assert float(d_loss) == pytest.approx(0.5798, abs=1e-4)
        assert float(g_loss) == pytest.approx(np.log(0.7), abs=1e-4)

    def test_extreme_scores_clamped(self):
        d_loss, _ = gan_loss(1.0, 1.0)
        assert np.isfinite(float(d_loss))

    def test_multi_scale_averaging(self):
        d1, _ = gan_loss([torch.tensor(0.8), torch.tensor(0.8)],
                         [torch.tensor(0.3), torch.tensor(0.3)])
        d2, _ = gan_loss(0.8, 0.3)
        assert float(d1) == pytest.approx(float(d2), abs=1e-7)

    def test_lsgan_variant(self):
        d_loss, g_loss = gan_loss(torch.tensor(1.0), torch.tensor(0.0), variant="lsgan")
        assert float(d_loss) == pytest.approx(0.0)
        assert float(g_loss) == pytest.approx(1.0)

    def test_unknown_variant_rejected(self):
        with pytest.raises(ConfigError):
            gan_loss(0.5, 0.5, variant="wasserstein")


class TestFeatureMatching:
    def test_identical_features_zero(self):
        feats = [[torch.rand(1, 4, 8, 8)], [torch.rand(1, 8, 4, 4)]]
        assert float(feature_matching_loss(feats, feats)) == 0.0

    def test_hand_value_single_layer(self):
        real = [[torch.tensor([0.0, 0.0])]]
        fake = [[torch.tensor([1.0, 1.0])]]
        assert float(feature_matching_loss(real, fake)) == pytest.approx(1.0)

    def test_homogeneous_in_scale(self):
        real = [[torch.rand(2, 3, 4, 4)]]
        fake = [[torch.rand(2, 3, 4, 4)]]
        base = float(feature_matching_loss(real, fake))
        scaled = float(feature_matching_loss([[real[0][0] * 3.0]], [[fake[0][0] * 3.0]]))
        assert scaled == pytest.approx(3.0 * base, rel=1e-6)

    def test_layer_mismatch_rejected(self):
        with pytest.raises(InputError):
            feature_matching_loss([[torch.rand(1, 2)]], [[torch.rand(1, 2), torch.rand(1, 2)]])

    def test_averages_over_layers_and_scales(self):
        zero = torch.zeros(4)
        one = torch.ones(4)
        # two scales x one layer: means 1 and 0 -> 0.5
        loss = feature_matching_loss([[zero], [zero]], [[one], [zero]])
        assert float(loss) == pytest.approx(0.5)


class TestPerceptualLoss:
    def test_perfect_prediction_zero(self):
        target = torch.rand(1, 3, 8, 8)
        mask = torch.ones(1, 1, 8, 8)
        loss = perceptual_loss(target, mask, target, IdentityExtractor())
        assert float(loss) == 0.0

    def test_unit_difference(self):
        pred = torch.ones(1, 3, 8, 8)
        mask = torch.ones(1, 1, 8, 8)
        target = torch.zeros(1, 3, 8, 8)
        assert float(perceptual_loss(pred, mask, target, IdentityExtractor())) == \
            pytest.approx(1.0)

    def test_zero_mask_zero_target_ignores_prediction(self):
        pred = torch.rand(1, 3, 8, 8)
        mask = torch.zeros(1, 1, 8, 8)
        target = torch.zeros(1, 3, 8, 8)
        assert float(perceptual_loss(pred, mask, target, IdentityExtractor())) == 0.0

    def test_missing_extractor_rejected(self):
        with pytest.raises(ConfigError):
            perceptual_loss(torch.rand(1, 3, 8, 8), torch.ones(1, 1, 8, 8),
                            torch.rand(1, 3, 8, 8), None)


class TestTotalObjective:
    def test_equal_weights_sum(self):
        total = total_objective(torch.tensor(-0.5), torch.tensor(0.2), torch.tensor(0.3),
                                1.0, 1.0)
        assert float(total) == pytest.approx(0.0)

    def test_zero_weights_pure_adversarial(self):
        total = total_objective(torch.tensor(-0.5), torch.tensor(9.0), torch.tensor(9.0),
                                0.0, 0.0)
        assert float(total) == pytest.approx(-0.5)

    def test_doubling_fm_weight_adds_fm(self):
        parts = (torch.tensor(-0.1), torch.tensor(0.4), torch.tensor(0.2))
        t1 = float(total_objective(*parts, 1.0, 1.0))
        t2 = float(total_objective(*parts, 2.0, 1.0))
        assert t2 - t1 == pytest.approx(0.4)

    def test_negative_weights_rejected(self):
        with pytest.raises(ConfigError):
            total_objective(torch.tensor(0.0), torch.tensor(0.0), torch.tensor(0.0), -1.0, 0.0)

    def test_breakdown_total(self):
        b = LossBreakdown(gan_d=0.1, gan_g=-0.4, fm=0.5, vgg=0.25, lambda_fm=2.0,
                          lambda_vgg=4.0)
        assert b.total_g == pytest.approx(-0.4 + 1.0 + 1.0)


class _TwoConvNet(nn.Module):
    """Two-conv toy generator used only for the finite-difference check."""

    def __init__(self):
        super().__init__()
        self.c1 = nn.Conv2d(2, 4, 3, padding=1)
        self.c2 = nn.Conv2d(4, 4, 3, padding=1)

    def forward(self, x):
        h = torch.tanh(self.c1(x))
        out = self.c2(h)
        return torch.sigmoid(out[:, :3]), torch.sigmoid(out[:, 3:4])


def finite_difference_check(loss_fn, net, rel_tol=1e-4, h=1e-6):
    loss = loss_fn()
    net.zero_grad()
    loss.backward()
    worst = 0.0
    for param in net.parameters():
        grad = param.grad.detach().clone()
        flat = param.data.view(-1)
        idx = torch.linspace(0, flat.numel() - 1, steps=min(20, flat.numel())).long()
        for i in idx:
            orig = float(flat[i])
            with torch.no_grad():
                flat[i] = orig + h
                up = float(loss_fn())
                flat[i] = orig - h
                down = float(loss_fn())
                flat[i] = orig
            numeric = (up - down) / (2 * h)
            analytic = float(grad.view(-1)[i])
            denom = max(abs(numeric), abs(analytic), 1e-8)
            worst = max(worst, abs(numeric - analytic) / denom)
    return worst


class TestGradientChecks:
    def test_perceptual_identity_gradients_match_finite_differences(self):
        torch.manual_seed(3)
        net = _TwoConvNet().double()
        x = torch.rand(1, 2, 8, 8, dtype=torch.float64)
        target = torch.rand(1, 3, 8, 8, dtype=torch.float64)

        def loss_fn():
            g, m = net(x)
            return perceptual_loss(g, m, target, IdentityExtractor())

        assert finite_difference_check(loss_fn, net) < 1e-4

    def test_feature_matching_gradients_match_finite_differences(self):
        torch.manual_seed(4)
        net = _TwoConvNet().double()
        disc = MultiScaleDiscriminator(2, 4, base_width=4, n_layers=2, n_scales=2).double()
        x = torch.rand(1, 2, 8, 8, dtype=torch.float64)
        y = torch.rand(1, 4, 8, 8, dtype=torch.float64)
        feats_real = disc(x, y)

        def loss_fn():
            g, m = net(x)
            feats_fake = disc(x, torch.cat([g, m], dim=1))
            return feature_matching_loss(feats_real, feats_fake)

        assert finite_difference_check(loss_fn, net) < 1e-4


class TestDiscriminator:
    def test_sees_the_condition(self):
        torch.manual_seed(5)
        disc = MultiScaleDiscriminator(6, 4, base_width=8, n_layers=2, n_scales=2)
        y = torch.rand(1, 4, 32, 32)
        s1 = disc(torch.rand(1, 6, 32, 32), y)[0][-1]
        s2 = disc(torch.rand(1, 6, 32, 32), y)[0][-1]
        assert not torch.allclose(s1, s2)

    def test_layer_lists_identical_real_fake(self):
        disc = MultiScaleDiscriminator(6, 4, base_width=8, n_layers=2, n_scales=2)
        x = torch.rand(1, 6, 32, 32)
        real = disc(x, torch.rand(1, 4, 32, 32))
        fake = disc(x, torch.rand(1, 4, 32, 32))
        assert [len(s) for s in real] == [len(s) for s in fake]
        assert all(r.shape == f.shape for sr, sf in zip(real, fake)
                   for r, f in zip(sr, sf))


class TestCheckpoints:
    def test_round_trip(self, tmp_path):
        cfg = GsConfig.tiny()
        net = GarmentSynthesisNet(cfg)
        path = tmp_path / "ck.pt"
        save_checkpoint(path, cfg, net, step=42, epoch=3, dataset_hash="abc")
        synth = load_synthesizer(path)
        assert isinstance(synth, TorchSynthesizer)
        assert synth.mode is RepresentationMode.HYBRID
        x = np.random.default_rng(0).random((6, 64, 64)).astype(np.float32)
        rep = build_representation("hybrid", vm=x[:3], sdp=x[3:])
        out1 = synth.synthesize(rep)
        out2 = synth.synthesize(rep)
        np.testing.assert_array_equal(out1.garment, out2.garment)
        assert out1.mask.shape == (64, 64)

    def test_wrong_mode_input_refused(self, tmp_path):
        cfg = GsConfig.tiny(mode="vm")
        net = GarmentSynthesisNet(cfg)
        path = tmp_path / "vm.pt"
        save_checkpoint(path, cfg, net)
        synth = load_synthesizer(path)
        x = np.random.default_rng(0).random((3, 64, 64)).astype(np.float32)
        rep = build_representation("sdp", sdp=x)
        with pytest.raises(InputError):
            synth.synthesize(rep)

    def test_constant_color_stub(self, tmp_path):
        stub = ConstantColorSynthesizer((0.9, 0.1, 0.2), mask_kind="full")
        path = tmp_path / "probe.json"
        path.write_text(stub.to_json())
        loaded = load_synthesizer(path)
        x = np.zeros((6, 32, 32), dtype=np.float32)
        rep = build_representation("hybrid", vm=x[:3], sdp=x[3:])
        out = loaded.synthesize(rep)
        assert np.all(out.garment[0] == np.float32(0.9))
        assert np.all(out.mask == 1.0)

    def test_missing_checkpoint_rejected(self, tmp_path):
        with pytest.raises(InputError):
            load_synthesizer(tmp_path / "missing.pt")
