#include "shape2field/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "shape2field/container.hpp"

namespace s2f {

namespace {
constexpr double kStdFloor = 1e-8;
} // namespace

nlohmann::json NormStats::to_json() const {
    return {{"input_mean", input_mean},
            {"input_std", input_std},
            {"output_mean", output_mean},
            {"output_std", output_std}};
}

NormStats NormStats::from_json(const nlohmann::json& j) {
    NormStats s;
    s.input_mean = j.at("input_mean").get<std::vector<double>>();
    s.input_std = j.at("input_std").get<std::vector<double>>();
    s.output_mean = j.at("output_mean").get<std::vector<double>>();
    s.output_std = j.at("output_std").get<std::vector<double>>();
    return s;
}

Tensor normalize_columns(const Tensor& t, const std::vector<double>& mean,
                         const std::vector<double>& std) {
    const int64_t c = t.dim(-1);
    check(static_cast<int64_t>(mean.size()) == c && static_cast<int64_t>(std.size()) == c,
          "normalization stats do not match channel count");
    Tensor out = t;
    const int64_t rows = t.rows_flat();
    for (int64_t i = 0; i < rows; ++i) {
        for (int64_t j = 0; j < c; ++j) {
            out[i * c + j] = (out[i * c + j] - mean[static_cast<size_t>(j)]) /
                             std[static_cast<size_t>(j)];
        }
    }
    return out;
}

Tensor denormalize_columns(const Tensor& t, const std::vector<double>& mean,
                           const std::vector<double>& std) {
    const int64_t c = t.dim(-1);
    check(static_cast<int64_t>(mean.size()) == c && static_cast<int64_t>(std.size()) == c,
          "normalization stats do not match channel count");
    Tensor out = t;
    const int64_t rows = t.rows_flat();
    for (int64_t i = 0; i < rows; ++i) {
        for (int64_t j = 0; j < c; ++j) {
            out[i * c + j] = out[i * c + j] * std[static_cast<size_t>(j)] +
                             mean[static_cast<size_t>(j)];
        }
    }
    return out;
}

void split_indices(int64_t n, double train_fraction, uint64_t seed, std::vector<int64_t>& train,
                   std::vector<int64_t>& test) {
    check(train_fraction > 0.0 && train_fraction <= 1.0, "train fraction out of range");
    std::vector<int64_t> order(static_cast<size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    std::mt19937_64 rng(seed);
    std::shuffle(order.begin(), order.end(), rng);
    const int64_t n_train =
        n == 0 ? 0
               : std::max<int64_t>(1, static_cast<int64_t>(std::llround(
                                          train_fraction * static_cast<double>(n))));
    train.assign(order.begin(), order.begin() + std::min(n_train, n));
    test.assign(order.begin() + std::min(n_train, n), order.end());
}

NormStats compute_norm_stats(const std::vector<PoissonSample>& samples,
                             const std::vector<int64_t>& indices) {
    NormStats s;
    if (samples.empty() || indices.empty()) {
        s.input_mean = {0.0, 0.0};
        s.input_std = {1.0, 1.0};
        s.output_mean = {0.0};
        s.output_std = {1.0};
        return s;
    }
    const int64_t in_c = samples.front().boundary.dim(1);
    const int64_t out_c = samples.front().solution.dim(1);

    std::vector<double> in_sum(in_c, 0.0), in_sq(in_c, 0.0);
    std::vector<double> out_sum(out_c, 0.0), out_sq(out_c, 0.0);
    int64_t in_n = 0, out_n = 0;
    auto accumulate_rows = [](const Tensor& t, std::vector<double>& sum, std::vector<double>& sq,
                              int64_t& count) {
        const int64_t c = t.dim(-1);
        const int64_t rows = t.rows_flat();
        for (int64_t i = 0; i < rows; ++i) {
            for (int64_t j = 0; j < c; ++j) {
                const double v = t[i * c + j];
                sum[static_cast<size_t>(j)] += v;
                sq[static_cast<size_t>(j)] += v * v;
            }
        }
        count += rows;
    };
    for (int64_t idx : indices) {
        const PoissonSample& sample = samples[static_cast<size_t>(idx)];
        accumulate_rows(sample.boundary, in_sum, in_sq, in_n);
        accumulate_rows(sample.queries, in_sum, in_sq, in_n);
        accumulate_rows(sample.solution, out_sum, out_sq, out_n);
    }

    auto finish = [](const std::vector<double>& sum, const std::vector<double>& sq, int64_t n,
                     std::vector<double>& mean, std::vector<double>& std) {
        const double dn = static_cast<double>(n);
        for (size_t j = 0; j < sum.size(); ++j) {
            const double m = sum[j] / dn;
            const double var = std::max(0.0, sq[j] / dn - m * m);
            mean.push_back(m);
            std.push_back(std::max(kStdFloor, std::sqrt(var)));
        }
    };
    finish(in_sum, in_sq, in_n, s.input_mean, s.input_std);
    finish(out_sum, out_sq, out_n, s.output_mean, s.output_std);
    return s;
}

Dataset generate_dataset(const GenerateOptions& opt) {
    check(opt.n_samples >= 0, "n_samples must be >= 0");
    check(opt.lambda_min <= opt.lambda_max && opt.lambda_min > 0.0, "bad lambda range");

    Dataset ds;
    std::mt19937_64 lambda_rng(opt.seed ^ 0x9e3779b97f4a7c15ULL);
    std::uniform_real_distribution<double> lambda_dist(opt.lambda_min, opt.lambda_max);
    for (int64_t i = 0; i < opt.n_samples; ++i) {
        const uint64_t domain_seed = opt.seed + static_cast<uint64_t>(i);
        StarDomain dom = sample_domain(domain_seed, opt.n_boundary, opt.n_modes, opt.smoothness);
        const double lambda =
            opt.lambda_min == opt.lambda_max ? opt.lambda_min : lambda_dist(lambda_rng);
        ds.samples.push_back(solve_poisson(dom, opt.grid_n, lambda));
    }

    split_indices(ds.size(), opt.train_fraction, opt.seed, ds.train_indices, ds.test_indices);
    ds.stats = compute_norm_stats(ds.samples, ds.train_indices);
    ds.metadata = {
        {"n_samples", opt.n_samples}, {"grid_n", opt.grid_n},
        {"seed", opt.seed},           {"n_boundary", opt.n_boundary},
        {"n_modes", opt.n_modes},     {"smoothness", opt.smoothness},
        {"lambda_min", opt.lambda_min}, {"lambda_max", opt.lambda_max},
        {"train_fraction", opt.train_fraction},
    };
    return ds;
}

void write_dataset(const std::string& base_path, const Dataset& ds) {
    ArrayContainer c;
    for (int64_t i = 0; i < ds.size(); ++i) {
        const PoissonSample& s = ds.samples[static_cast<size_t>(i)];
        const std::string prefix = "sample" + std::to_string(i) + "/";
        c.put(prefix + "boundary", s.boundary);
        c.put(prefix + "queries", s.queries);
        c.put(prefix + "solution", s.solution);
        c.put(prefix + "load", Tensor::scalar(s.load));
    }
    c.put_i64("split/train", {static_cast<int64_t>(ds.train_indices.size())}, ds.train_indices);
    c.put_i64("split/test", {static_cast<int64_t>(ds.test_indices.size())}, ds.test_indices);
    c.metadata = ds.metadata;
    c.metadata["kind"] = "dataset";
    c.metadata["sample_count"] = ds.size();
    c.metadata["norm_stats"] = ds.stats.to_json();
    c.save(base_path);
}

Dataset read_dataset(const std::string& base_path) {
    ArrayContainer c = ArrayContainer::load(base_path);
    check(c.metadata.value("kind", "") == "dataset", "container is not a dataset");
    Dataset ds;
    const int64_t n = c.metadata.at("sample_count").get<int64_t>();
    ds.samples.reserve(static_cast<size_t>(n));
    for (int64_t i = 0; i < n; ++i) {
        const std::string prefix = "sample" + std::to_string(i) + "/";
        PoissonSample s;
        s.boundary = c.get(prefix + "boundary");
        s.queries = c.get(prefix + "queries");
        s.solution = c.get(prefix + "solution");
        s.load = c.get(prefix + "load").item();
        ds.samples.push_back(std::move(s));
    }
    ds.train_indices = c.get_i64("split/train");
    ds.test_indices = c.get_i64("split/test");
    ds.stats = NormStats::from_json(c.metadata.at("norm_stats"));
    ds.metadata = c.metadata;
    return ds;
}

} // namespace s2f
