#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "shape2field/encoder.hpp"

using namespace s2f;

namespace {

Tensor random_points(int64_t n, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> dist(-1.0, 1.0);
    Tensor t({n, 2});
    for (double& v : t.data) {
        v = dist(rng);
    }
    return t;
}

EncoderConfig small_config() {
    EncoderConfig cfg;
    cfg.embed_dim = 16;
    cfg.num_centroids = 6;
    cfg.group_size = 4;
    cfg.group_radius = 0.3;
    cfg.cross_blocks = 1;
    cfg.self_blocks = 2;
    cfg.heads = 4;
    cfg.freq.num_frequencies = 4;
    return cfg;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
    REQUIRE(a.numel() == b.numel());
    double m = 0.0;
    for (int64_t i = 0; i < a.numel(); ++i) {
        m = std::max(m, std::abs(a[i] - b[i]));
    }
    return m;
}

} // namespace

TEST_CASE("frequency encoding: p=0 gives [0, 0, 1, 0, 1] per coordinate") {
    FrequencyEncodingConfig cfg;
    cfg.num_frequencies = 2;
    cfg.include_input = true;
    Tensor out = frequency_encode(Tensor::from({1, 1}, {0.0}), cfg);
    CHECK(out.shape == std::vector<int64_t>{1, 5});
    const double expected[5] = {0.0, 0.0, 1.0, 0.0, 1.0};
    for (int i = 0; i < 5; ++i) {
        CHECK(out[i] == doctest::Approx(expected[i]));
    }
}

TEST_CASE("frequency encoding: p=1 without the input channel gives [sin pi, cos pi]") {
    FrequencyEncodingConfig cfg;
    cfg.num_frequencies = 1;
    cfg.include_input = false;
    Tensor out = frequency_encode(Tensor::from({1, 1}, {1.0}), cfg);
    CHECK(out.shape == std::vector<int64_t>{1, 2});
    CHECK(std::abs(out[0]) < 1e-12);      // sin(pi)
    CHECK(out[1] == doctest::Approx(-1.0)); // cos(pi)
}

TEST_CASE("frequency encoding matches direct trig evaluation") {
    FrequencyEncodingConfig cfg;
    cfg.num_frequencies = 8;
    const double p = 0.3;
    Tensor out = frequency_encode(Tensor::from({1, 1}, {p}), cfg);
    CHECK(out[0] == doctest::Approx(p));
    for (int k = 0; k < 8; ++k) {
        const double f = std::pow(2.0, k) * M_PI * p;
        CHECK(std::abs(out[1 + 2 * k] - std::sin(f)) < 1e-12);
        CHECK(std::abs(out[2 + 2 * k] - std::cos(f)) < 1e-12);
    }
}

TEST_CASE("frequency encoding shape contract across ranks") {
    FrequencyEncodingConfig cfg;
    cfg.num_frequencies = 3;
    Tensor out = frequency_encode(Tensor({4, 5, 2}, 0.25), cfg);
    CHECK(out.shape == std::vector<int64_t>{4, 5, 2 * 7});
}

TEST_CASE("local features: identical group points pool to the single point's features") {
    std::mt19937_64 rng(5);
    EncoderConfig cfg = small_config();
    ParamRegistry reg;
    EncoderWeights w = make_encoder(reg, cfg, rng);

    PointCloud pc = make_cloud(random_points(10, rng));
    // one group whose members are all point 3
    GroupedFeatures g;
    g.group_size = 4;
    g.radius = 0.3;
    g.group_indices = {3, 3, 3, 3};
    g.group_points = Tensor({1, 4, 2});
    for (int64_t s = 0; s < 4; ++s) {
        g.group_points[s * 2] = pc.points[3 * 2];
        g.group_points[s * 2 + 1] = pc.points[3 * 2 + 1];
    }

    Value pe = apply_linear(w.pe_linear, constant(frequency_encode(pc.points, cfg.freq)));
    Value pooled = local_feature_extract(pe, g, cfg, w);

    GroupedFeatures single;
    single.group_size = 1;
    single.radius = 0.3;
    single.group_indices = {3};
    single.group_points = Tensor({1, 1, 2});
    single.group_points[0] = pc.points[3 * 2];
    single.group_points[1] = pc.points[3 * 2 + 1];
    Value pooled_single = local_feature_extract(pe, single, cfg, w);

    CHECK(max_abs_diff(pooled->value, pooled_single->value) == 0.0);
}

TEST_CASE("local features: permuting points within a group changes nothing") {
    std::mt19937_64 rng(6);
    EncoderConfig cfg = small_config();
    ParamRegistry reg;
    EncoderWeights w = make_encoder(reg, cfg, rng);

    PointCloud pc = make_cloud(random_points(12, rng));
    SamplingResult s = farthest_point_sample(pc, 3, SamplingInit::fixed_first_valid);
    GroupedFeatures g = ball_group(pc, s, 0.4, 5);

    Value pe = apply_linear(w.pe_linear, constant(frequency_encode(pc.points, cfg.freq)));
    Value base = local_feature_extract(pe, g, cfg, w);

    GroupedFeatures permuted = g;
    // reverse every group's member order (indices and coordinates together)
    for (int64_t gi = 0; gi < 3; ++gi) {
        std::reverse(permuted.group_indices.begin() + gi * 5,
                     permuted.group_indices.begin() + (gi + 1) * 5);
        for (int64_t a = 0; a < 2; ++a) {
            for (int64_t sl = 0; sl < 2; ++sl) { // swap slots (0,4) and (1,3)
                std::swap(permuted.group_points[(gi * 5 + sl) * 2 + a],
                          permuted.group_points[(gi * 5 + 4 - sl) * 2 + a]);
            }
        }
    }
    Value out = local_feature_extract(pe, permuted, cfg, w);
    CHECK(max_abs_diff(base->value, out->value) == 0.0);
}

TEST_CASE("local features: tiny hand example with an identity-like mlp") {
    // group mlp with one linear layer set to pass coordinates through:
    // output = [pe_channels..., x, y] * W, W picks the coordinate columns
    EncoderConfig cfg;
    cfg.embed_dim = 2;
    cfg.heads = 1;
    cfg.freq.num_frequencies = 1;
    cfg.freq.include_input = false; // pe_channels = 2*2 = 4

    std::mt19937_64 rng(7);
    ParamRegistry reg;
    EncoderWeights w = make_encoder(reg, cfg, rng);
    // overwrite the group mlp to copy the raw coordinate channels through:
    // layers are (2+2)->2->2->2 with gelu between
    for (const auto& p : reg.all()) {
        if (p.name.rfind("enc.group_mlp", 0) == 0) {
            std::fill(p.node->value.data.begin(), p.node->value.data.end(), 0.0);
        }
    }
    // l0: in 4 -> out 2; input channels 2,3 are the group coordinates
    reg.find("enc.group_mlp.l0.weight")->node->value[2 * 2 + 0] = 1.0;
    reg.find("enc.group_mlp.l0.weight")->node->value[3 * 2 + 1] = 1.0;
    // l1, l2: 2 -> 2 identity, so the composed map is gelu(gelu(coord))
    reg.find("enc.group_mlp.l1.weight")->node->value[0] = 1.0;
    reg.find("enc.group_mlp.l1.weight")->node->value[3] = 1.0;
    reg.find("enc.group_mlp.l2.weight")->node->value[0] = 1.0;
    reg.find("enc.group_mlp.l2.weight")->node->value[3] = 1.0;

    Tensor pts = Tensor::from({3, 2}, {0.2, -0.4, 0.6, 0.1, -0.3, 0.5});
    PointCloud pc = make_cloud(pts);
    GroupedFeatures g;
    g.group_size = 3;
    g.radius = 1.0;
    g.group_indices = {0, 1, 2, 2, 1, 0};
    g.group_points = Tensor({2, 3, 2});
    for (int64_t slot = 0; slot < 6; ++slot) {
        const int64_t idx = g.group_indices[static_cast<size_t>(slot)];
        g.group_points[slot * 2] = pts[idx * 2];
        g.group_points[slot * 2 + 1] = pts[idx * 2 + 1];
    }

    Value pe = apply_linear(w.pe_linear, constant(frequency_encode(pc.points, cfg.freq)));
    Value pooled = local_feature_extract(pe, g, cfg, w);

    auto gelu_scalar = [](double x) { return 0.5 * x * (1.0 + std::erf(x / std::sqrt(2.0))); };
    // hand-evaluate: per point, channel c = gelu(gelu(coord_c)), then max
    for (int64_t gi = 0; gi < 2; ++gi) {
        for (int64_t c = 0; c < 2; ++c) {
            double expected = -1e30;
            for (int64_t slot = 0; slot < 3; ++slot) {
                const double coord = g.group_points[(gi * 3 + slot) * 2 + c];
                expected = std::max(expected, gelu_scalar(gelu_scalar(coord)));
            }
            CHECK(pooled->value[gi * 2 + c] == doctest::Approx(expected).epsilon(1e-12));
        }
    }
}

TEST_CASE("encoder: padding invariance of the tokens") {
    std::mt19937_64 rng(8);
    EncoderConfig cfg = small_config();
    ParamRegistry reg;
    EncoderWeights w = make_encoder(reg, cfg, rng);

    PointCloud pc = make_cloud(random_points(30, rng));
    Value base = encode_geometry(pc, cfg, w, SamplingInit::fixed_first_valid);

    PointCloud padded;
    padded.points = Tensor({80, 2});
    std::copy(pc.points.data.begin(), pc.points.data.end(), padded.points.data.begin());
    std::mt19937_64 junk(1234);
    for (int64_t i = 60; i < 160; ++i) {
        padded.points.data[static_cast<size_t>(i)] =
            std::uniform_real_distribution<double>(-1e3, 1e3)(junk);
    }
    padded.valid.assign(80, 0);
    std::fill(padded.valid.begin(), padded.valid.begin() + 30, 1);

    Value with_padding = encode_geometry(padded, cfg, w, SamplingInit::fixed_first_valid);
    CHECK(base->value.shape == with_padding->value.shape);
    CHECK(max_abs_diff(base->value, with_padding->value) <= 1e-10);
}

TEST_CASE("encoder: shuffled cloud with the same anchor gives the same tokens") {
    std::mt19937_64 rng(9);
    EncoderConfig cfg = small_config();
    ParamRegistry reg;
    EncoderWeights w = make_encoder(reg, cfg, rng);

    const int64_t n = 40;
    PointCloud pc = make_cloud(random_points(n, rng));
    Value base = encode_geometry(pc, cfg, w, SamplingInit::fixed_first_valid);

    std::vector<int64_t> perm(static_cast<size_t>(n));
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin() + 1, perm.end(), rng); // keep the anchor at row 0
    PointCloud shuffled = make_cloud(Tensor({n, 2}));
    for (int64_t i = 0; i < n; ++i) {
        shuffled.points[i * 2] = pc.points[perm[static_cast<size_t>(i)] * 2];
        shuffled.points[i * 2 + 1] = pc.points[perm[static_cast<size_t>(i)] * 2 + 1];
    }
    Value out = encode_geometry(shuffled, cfg, w, SamplingInit::fixed_first_valid);
    CHECK(max_abs_diff(base->value, out->value) <= 1e-9);
}

TEST_CASE("encoder: degenerate one-point cloud still produces finite tokens") {
    std::mt19937_64 rng(10);
    EncoderConfig cfg = small_config();
    cfg.num_centroids = 1;
    cfg.group_size = 1;
    ParamRegistry reg;
    EncoderWeights w = make_encoder(reg, cfg, rng);

    PointCloud pc = make_cloud(Tensor::from({1, 2}, {0.3, -0.2}));
    Value t1 = encode_geometry(pc, cfg, w, SamplingInit::fixed_first_valid);
    Value t2 = encode_geometry(pc, cfg, w, SamplingInit::fixed_first_valid);
    CHECK(t1->value.shape == std::vector<int64_t>{1, 16});
    CHECK(all_finite(t1->value));
    CHECK(t1->value.data == t2->value.data);
}

TEST_CASE("encoder: token shape is [N_s x d_e] regardless of cloud size") {
    std::mt19937_64 rng(11);
    EncoderConfig cfg = small_config();
    ParamRegistry reg;
    EncoderWeights w = make_encoder(reg, cfg, rng);
    for (int64_t n : {3, 17, 80}) {
        PointCloud pc = make_cloud(random_points(n, rng));
        Value t = encode_geometry(pc, cfg, w, SamplingInit::fixed_first_valid);
        CHECK(t->value.shape == std::vector<int64_t>{cfg.num_centroids, cfg.embed_dim});
    }
}

TEST_CASE("encoder: random fps init changes tokens only mildly on the same cloud") {
    // untrained-weights smoke check that seeded init is wired through;
    // the trained-model seed-sensitivity bound lives in the acceptance run
    std::mt19937_64 rng(12);
    EncoderConfig cfg = small_config();
    ParamRegistry reg;
    EncoderWeights w = make_encoder(reg, cfg, rng);
    PointCloud pc = make_cloud(random_points(50, rng));

    Value a = encode_geometry(pc, cfg, w, SamplingInit::seeded_random, 1);
    Value b = encode_geometry(pc, cfg, w, SamplingInit::seeded_random, 1);
    CHECK(a->value.data == b->value.data); // deterministic per seed
    CHECK(all_finite(a->value));
}
