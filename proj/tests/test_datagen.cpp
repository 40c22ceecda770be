#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>

#include "shape2field/container.hpp"
#include "shape2field/dataset.hpp"

using namespace s2f;

namespace {

struct TempDir {
    std::filesystem::path path;
    TempDir() {
        path = std::filesystem::temp_directory_path() /
               ("s2f_test_" + std::to_string(::getpid()) + "_" +
                std::to_string(reinterpret_cast<uintptr_t>(this)));
        std::filesystem::create_directories(path);
    }
    ~TempDir() { std::filesystem::remove_all(path); }
    std::string file(const std::string& name) const { return (path / name).string(); }
};

double disk_max_u_error(int64_t grid_n) {
    // -lap u = 1 on a disk of radius R about the origin has
    // u = (R^2 - rho^2)/4, max R^2/4 at the center
    StarDomain disk = make_star_domain(std::vector<double>(144, 0.5));
    PoissonSample s = solve_poisson(disk, grid_n, 1.0);
    double max_u = 0.0;
    for (double v : s.solution.data) {
        max_u = std::max(max_u, v);
    }
    return std::abs(max_u - 0.0625) / 0.0625;
}

} // namespace

TEST_CASE("star domain: zero modes give a circle of radius 0.5") {
    StarDomain dom = sample_domain(0, 144, 0, 0.12);
    for (int64_t i = 0; i < dom.size(); ++i) {
        const double x = dom.boundary_points[i * 2];
        const double y = dom.boundary_points[i * 2 + 1];
        CHECK(std::abs(std::sqrt(x * x + y * y) - 0.5) < 1e-12);
    }
}

TEST_CASE("star domain: radii are clamped to [0.2, 0.8]") {
    for (uint64_t seed = 0; seed < 50; ++seed) {
        StarDomain dom = sample_domain(seed, 144, 6, 0.5); // rough field, clamps often
        for (double r : dom.radii) {
            CHECK(r >= 0.2);
            CHECK(r <= 0.8);
        }
    }
}

TEST_CASE("star domain: different seeds give distinct boundaries") {
    StarDomain a = sample_domain(1);
    StarDomain b = sample_domain(2);
    double max_diff = 0.0;
    for (size_t i = 0; i < a.radii.size(); ++i) {
        max_diff = std::max(max_diff, std::abs(a.radii[i] - b.radii[i]));
    }
    CHECK(max_diff > 0.0);
}

TEST_CASE("star domain: same seed is bit-identical") {
    StarDomain a = sample_domain(77);
    StarDomain b = sample_domain(77);
    CHECK(a.radii == b.radii);
    CHECK(a.boundary_points.data == b.boundary_points.data);
}

TEST_CASE("point-in-polygon agrees with the radial definition on stars") {
    StarDomain dom = sample_domain(3);
    // sample along rays: inside iff rho < r(theta) of the polygon edge; use
    // safely-inside and safely-outside probes
    for (int64_t i = 0; i < dom.size(); ++i) {
        const double th = dom.angle(i);
        const double r = dom.radii[static_cast<size_t>(i)];
        CHECK(dom.contains(0.5 * r * std::cos(th), 0.5 * r * std::sin(th)));
        CHECK(!dom.contains(1.2 * r * std::cos(th), 1.2 * r * std::sin(th)));
    }
    CHECK(dom.contains(0.0, 0.0));
    CHECK(!dom.contains(0.95, 0.95));
}

TEST_CASE("poisson: disk solution within 10% of the analytic maximum at grid 64") {
    CHECK(disk_max_u_error(64) < 0.10);
}

TEST_CASE("poisson: error contracts when the grid doubles") {
    const double e64 = disk_max_u_error(64);
    const double e128 = disk_max_u_error(128);
    CHECK(e128 / e64 < 0.7);
}

TEST_CASE("poisson: solution scales linearly with the load") {
    StarDomain dom = sample_domain(5);
    PoissonSample u1 = solve_poisson(dom, 48, 1.0);
    PoissonSample u2 = solve_poisson(dom, 48, 2.0);
    REQUIRE(u1.solution.numel() == u2.solution.numel());
    for (int64_t i = 0; i < u1.solution.numel(); ++i) {
        CHECK(std::abs(u2.solution[i] - 2.0 * u1.solution[i]) <=
              1e-9 * std::abs(u2.solution[i]));
    }
}

TEST_CASE("poisson: positivity at every interior node") {
    for (uint64_t seed = 0; seed < 5; ++seed) {
        PoissonSample s = solve_poisson(sample_domain(seed), 48, 1.0);
        for (double v : s.solution.data) {
            CHECK(v > 0.0);
        }
    }
}

TEST_CASE("poisson: queries lie strictly inside the boundary") {
    StarDomain dom = sample_domain(8);
    PoissonSample s = solve_poisson(dom, 48, 1.0);
    for (int64_t i = 0; i < s.queries.dim(0); ++i) {
        CHECK(dom.contains(s.queries[i * 2], s.queries[i * 2 + 1]));
    }
}

TEST_CASE("poisson: interior node counts vary across seeds") {
    std::set<int64_t> counts;
    for (uint64_t seed = 0; seed < 100; ++seed) {
        PoissonSample s = solve_poisson(sample_domain(seed), 48, 1.0);
        counts.insert(s.queries.dim(0));
    }
    CHECK(counts.size() > 1);
}

TEST_CASE("poisson: same seed gives a bit-identical sample") {
    PoissonSample a = solve_poisson(sample_domain(13), 48, 1.0);
    PoissonSample b = solve_poisson(sample_domain(13), 48, 1.0);
    CHECK(a.queries.data == b.queries.data);
    CHECK(a.solution.data == b.solution.data);
}

TEST_CASE("container: round trip is bit-exact") {
    TempDir tmp;
    ArrayContainer c;
    Tensor t = Tensor::from({2, 3}, {1.5, -2.25, 0.0, 1e-300, 3.14159, -0.5});
    c.put("a/b", t);
    c.put_i64("idx", {4}, {0, -5, 7, 123456789012345});
    c.metadata["note"] = "round trip";
    c.save(tmp.file("c"));

    ArrayContainer r = ArrayContainer::load(tmp.file("c"));
    CHECK(r.get("a/b").data == t.data);
    CHECK(r.get("a/b").shape == t.shape);
    CHECK(r.get_i64("idx") == std::vector<int64_t>{0, -5, 7, 123456789012345});
    CHECK(r.metadata.at("note") == "round trip");
}

TEST_CASE("container: truncated payload fails with an offset error") {
    TempDir tmp;
    ArrayContainer c;
    c.put("x", Tensor({100}, 1.0));
    c.save(tmp.file("t"));

    std::filesystem::resize_file(tmp.file("t") + ".bin", 100); // 800 bytes expected
    CHECK_THROWS_WITH_AS(ArrayContainer::load(tmp.file("t")),
                         doctest::Contains("extends past the end"), std::runtime_error);
}

TEST_CASE("container: corrupt manifest fails descriptively") {
    TempDir tmp;
    {
        std::ofstream mf(tmp.file("bad") + ".json");
        mf << "{ not json";
        std::ofstream bf(tmp.file("bad") + ".bin");
    }
    CHECK_THROWS_WITH_AS(ArrayContainer::load(tmp.file("bad")),
                         doctest::Contains("corrupt manifest"), std::runtime_error);
}

TEST_CASE("container: overlapping offsets are rejected") {
    TempDir tmp;
    ArrayContainer c;
    c.put("x", Tensor({4}, 1.0));
    c.put("y", Tensor({4}, 2.0));
    c.save(tmp.file("o"));

    // tamper with the manifest: point the second array into the first
    std::ifstream in(tmp.file("o") + ".json");
    nlohmann::json j;
    in >> j;
    in.close();
    j["arrays"][1]["offset"] = 8;
    std::ofstream out(tmp.file("o") + ".json");
    out << j.dump();
    out.close();
    CHECK_THROWS_WITH_AS(ArrayContainer::load(tmp.file("o")),
                         doctest::Contains("overlaps"), std::runtime_error);
}

TEST_CASE("dataset: empty dataset round-trips as a valid container") {
    TempDir tmp;
    GenerateOptions opt;
    opt.n_samples = 0;
    Dataset ds = generate_dataset(opt);
    write_dataset(tmp.file("empty"), ds);
    Dataset r = read_dataset(tmp.file("empty"));
    CHECK(r.size() == 0);
}

TEST_CASE("dataset: three-sample round trip is bitwise identical") {
    TempDir tmp;
    GenerateOptions opt;
    opt.n_samples = 3;
    opt.grid_n = 32;
    opt.seed = 9;
    Dataset ds = generate_dataset(opt);
    write_dataset(tmp.file("d3"), ds);
    Dataset r = read_dataset(tmp.file("d3"));

    REQUIRE(r.size() == 3);
    for (int64_t i = 0; i < 3; ++i) {
        CHECK(r.samples[i].boundary.data == ds.samples[i].boundary.data);
        CHECK(r.samples[i].queries.data == ds.samples[i].queries.data);
        CHECK(r.samples[i].solution.data == ds.samples[i].solution.data);
        CHECK(r.samples[i].load == ds.samples[i].load);
    }
    CHECK(r.train_indices == ds.train_indices);
    CHECK(r.test_indices == ds.test_indices);
    CHECK(r.stats.output_mean == ds.stats.output_mean);
}

TEST_CASE("dataset: normalization round trip") {
    GenerateOptions opt;
    opt.n_samples = 4;
    opt.grid_n = 32;
    Dataset ds = generate_dataset(opt);
    const Tensor& y = ds.samples[0].solution;
    Tensor z = normalize_columns(y, ds.stats.output_mean, ds.stats.output_std);
    Tensor back = denormalize_columns(z, ds.stats.output_mean, ds.stats.output_std);
    for (int64_t i = 0; i < y.numel(); ++i) {
        CHECK(std::abs(back[i] - y[i]) <= 1e-12);
    }
}

TEST_CASE("dataset: lambda range is honored and recorded") {
    GenerateOptions opt;
    opt.n_samples = 6;
    opt.grid_n = 32;
    opt.lambda_min = 0.5;
    opt.lambda_max = 2.0;
    opt.seed = 4;
    Dataset ds = generate_dataset(opt);
    bool varies = false;
    for (const auto& s : ds.samples) {
        CHECK(s.load >= 0.5);
        CHECK(s.load <= 2.0);
        varies = varies || (s.load != ds.samples[0].load);
    }
    CHECK(varies);
}

TEST_CASE("degenerate domain errors") {
    CHECK_THROWS(solve_poisson(sample_domain(0), 8, 1.0)); // grid_n below the minimum
    // a polygon smaller than the node spacing captures no grid node
    StarDomain tiny = make_star_domain(std::vector<double>(16, 0.05));
    CHECK_THROWS_WITH_AS(solve_poisson(tiny, 16, 1.0), "degenerate domain",
                         std::runtime_error);
}
