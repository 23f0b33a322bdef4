#include <cmath>
#include <numbers>
#include <set>
#include <sstream>

#include "doctest.h"
#include "gencal/cluster.hpp"
#include "gencal/data.hpp"
#include "support.hpp"

using namespace gencal;

namespace {

double dist(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
    return std::sqrt(s);
}

}  // namespace

TEST_SUITE("data") {

TEST_CASE("two far blobs: within-class distances stay below the between-class minimum") {
    const Dataset d = make_blobs(2, 10, 2, 10.0, 5);
    REQUIRE(d.size() == 20);
    double within = 0.0, between = INFINITY;
    for (std::size_t i = 0; i < d.size(); ++i) {
        for (std::size_t j = i + 1; j < d.size(); ++j) {
            const double dd = dist(d.samples.row(i), d.samples.row(j));
            if (d.labels[i] == d.labels[j])
                within = std::max(within, dd);
            else
                between = std::min(between, dd);
        }
    }
    CHECK(within < between);
}

TEST_CASE("blob centers respect the separation and generation is seeded") {
    const Dataset a = make_blobs(4, 50, 8, 8.0, 11);
    const Dataset b = make_blobs(4, 50, 8, 8.0, 11);
    CHECK(a.samples == b.samples);
    CHECK(a.labels == b.labels);
    CHECK_FALSE(make_blobs(4, 50, 8, 8.0, 12).samples == a.samples);
    CHECK(a.class_counts() == std::vector<std::size_t>{50, 50, 50, 50});
}

TEST_CASE("k-means on raw 4-class blobs is near perfect") {
    for (std::uint64_t seed : {0ULL, 1ULL, 2ULL}) {
        const Dataset d = make_blobs(4, 50, 8, 8.0, seed);
        const ClusterResult r = kmeans(d.samples, 4, seed);
        CHECK(accuracy(r.assignments, d.labels, 4) >= 0.99);
    }
}

TEST_CASE("blob preconditions") {
    CHECK_THROWS_AS(make_blobs(1, 10, 2, 5.0, 0), std::invalid_argument);
    CHECK_THROWS_AS(make_blobs(2, 1, 2, 5.0, 0), std::invalid_argument);
    CHECK_THROWS_AS(make_blobs(2, 10, 2, 0.0, 0), std::invalid_argument);
    CHECK_THROWS_WITH_AS(make_blobs(50, 10, 1, 10.0, 0), doctest::Contains("cannot place"), std::invalid_argument);
}

TEST_CASE("blobs at explicit centers") {
    const Matrix centers(2, 2, std::vector<double>{5, 0, -5, 0});
    const Dataset d = make_blobs_at(centers, 2000, 3);
    for (int k = 0; k < 2; ++k) {
        double mx = 0.0, my = 0.0;
        for (std::size_t i = 0; i < d.size(); ++i) {
            if (d.labels[i] != k) continue;
            mx += d.samples(i, 0);
            my += d.samples(i, 1);
        }
        CHECK(mx / 2000 == doctest::Approx(k == 0 ? 5.0 : -5.0).epsilon(0.02));
        CHECK(std::abs(my / 2000) < 0.1);
    }
}

TEST_CASE("rings have the requested radii") {
    const Dataset d = make_rings(3, 200, 2.0, 0.0, 1);
    for (std::size_t i = 0; i < d.size(); ++i) {
        const double r = std::hypot(d.samples(i, 0), d.samples(i, 1));
        CHECK(r == doctest::Approx(2.0 * (d.labels[i] + 1)));
    }
}

TEST_CASE("noise-free glyphs equal their templates") {
    const Dataset d = make_glyphs(4, 5, 8, 0.0, 0);
    for (std::size_t i = 0; i < d.size(); ++i) {
        const auto tmpl = glyph_template(d.labels[i], 8);
        CHECK(std::equal(tmpl.begin(), tmpl.end(), d.samples.row(i).begin()));
    }
}

TEST_CASE("templates are distinct, two-valued and available at every side") {
    for (std::size_t side : {8u, 12u, 16u}) {
        std::set<std::vector<double>> seen;
        for (int k = 0; k < kGlyphTemplateCount; ++k) {
            const auto t = glyph_template(k, side);
            CHECK(t.size() == side * side);
            for (double v : t) CHECK((v == 1.0 || v == -1.0));
            seen.insert(t);
        }
        CHECK(seen.size() == static_cast<std::size_t>(kGlyphTemplateCount));
    }
    CHECK_THROWS_AS(glyph_template(0, 10), std::invalid_argument);
}

TEST_CASE("noisy glyph means follow the clamped-noise expectation") {
    // With pixels at +-1 and clamping to [-1, 1], E[pixel] = +-(1 - sigma phi(0)).
    const double sigma = 0.3;
    const double shrink = sigma / std::sqrt(2.0 * std::numbers::pi);
    const Dataset d = make_glyphs(4, 500, 8, sigma, 9);
    for (int k = 0; k < 4; ++k) {
        const auto tmpl = glyph_template(k, 8);
        for (std::size_t p = 0; p < tmpl.size(); ++p) {
            double m = 0.0;
            for (std::size_t i = 0; i < d.size(); ++i)
                if (d.labels[i] == k) m += d.samples(i, p);
            m /= 500.0;
            CHECK(std::abs(m - tmpl[p] * (1.0 - shrink)) < 0.04);
        }
    }
    for (double v : d.samples.values) CHECK(std::abs(v) <= 1.0);
}

TEST_CASE("too many glyph classes names the limit") {
    CHECK_THROWS_WITH_AS(make_glyphs(20, 10, 8, 0.3, 0), doctest::Contains("10 built-in templates"),
                         std::invalid_argument);
}

TEST_CASE("identity augmentation returns the input") {
    Rng rng = make_rng(1);
    const std::vector<double> x{1.5, -2.0, 0.25};
    const AugmentSpec id{};
    CHECK(augment(x, id, rng) == x);
}

TEST_CASE("augment spec invariants") {
    CHECK_THROWS(AugmentSpec{0.0, 1.0, 1.0, 1.0, 0, false}.validate());
    CHECK_THROWS(AugmentSpec{-0.1, 0.0, 1.0, 1.0, 0, false}.validate());
    CHECK_THROWS(AugmentSpec{0.0, 0.0, 1.1, 1.2, 0, false}.validate());
    CHECK_NOTHROW(AugmentSpec{0.5, 0.1, 0.8, 1.2, 0, false}.validate());
}

TEST_CASE("additive noise moments") {
    Rng rng = make_rng(2);
    const AugmentSpec spec{0.1, 0.0, 1.0, 1.0, 0, false};
    const std::vector<double> zero(1, 0.0);
    double s = 0.0, s2 = 0.0;
    const int n = 10000;
    for (int i = 0; i < n; ++i) {
        const double v = augment(zero, spec, rng)[0];
        s += v;
        s2 += v * v;
    }
    const double mean = s / n;
    const double sd = std::sqrt(s2 / n - mean * mean);
    CHECK(std::abs(mean) < 0.01);
    CHECK(std::abs(sd - 0.1) < 0.01);
}

TEST_CASE("masking, jitter, rotation and clamping") {
    Rng rng = make_rng(3);
    std::vector<double> x(16);
    for (std::size_t i = 0; i < x.size(); ++i) x[i] = static_cast<double>(i) + 1.0;

    const AugmentSpec mask{0.0, 0.5, 1.0, 1.0, 0, false};
    std::size_t zeros = 0;
    for (int i = 0; i < 1000; ++i)
        for (double v : augment(x, mask, rng)) zeros += v == 0.0;
    CHECK(static_cast<double>(zeros) / 16000.0 == doctest::Approx(0.5).epsilon(0.05));

    const AugmentSpec jitter{0.0, 0.0, 0.5, 2.0, 0, false};
    const auto j = augment(x, jitter, rng);
    const double ratio = j[0] / x[0];
    CHECK(ratio >= 0.5);
    CHECK(ratio <= 2.0);
    for (std::size_t i = 0; i < x.size(); ++i) CHECK(j[i] == doctest::Approx(x[i] * ratio));

    // rotations permute pixels of a 4x4 image
    const AugmentSpec rot{0.0, 0.0, 1.0, 1.0, 4, false};
    for (int i = 0; i < 10; ++i) {
        auto r = augment(x, rot, rng);
        std::sort(r.begin(), r.end());
        CHECK(r == x);
    }

    const AugmentSpec clamp{5.0, 0.0, 1.0, 1.0, 0, true};
    for (double v : augment(x, clamp, rng)) CHECK(std::abs(v) <= 1.0);
}

TEST_CASE("imbalance arithmetic") {
    const Dataset d = make_blobs(4, 100, 2, 5.0, 0);
    CHECK(apply_imbalance(d, {{1.0, 1.0, 1.0, 1.0}}, 0).samples == d.samples);
    const Dataset sub = apply_imbalance(d, {{1.0, 0.2, 0.5, 1.0}}, 0);
    CHECK(sub.class_counts() == std::vector<std::size_t>{100, 20, 50, 100});
    const Dataset half = apply_imbalance(d, {{0.5, 1.0, 1.0, 1.0}}, 3);
    CHECK(half.class_counts()[0] == 50);

    // retained samples keep their labels
    for (std::size_t i = 0; i < sub.size(); ++i) {
        bool found = false;
        for (std::size_t j = 0; j < d.size() && !found; ++j)
            found = d.labels[j] == sub.labels[i] &&
                    std::equal(d.samples.row(j).begin(), d.samples.row(j).end(), sub.samples.row(i).begin());
        CHECK(found);
    }
}

TEST_CASE("imbalance preconditions") {
    const Dataset d = make_blobs(4, 10, 2, 5.0, 0);
    CHECK_THROWS(apply_imbalance(d, {{0.5, 0.5, 0.5, 0.5}}, 0));
    CHECK_THROWS(apply_imbalance(d, {{1.0, 0.0, 1.0, 1.0}}, 0));
    CHECK_THROWS(apply_imbalance(d, {{1.0, 1.0, 1.0}}, 0));
    CHECK_THROWS(apply_imbalance(d, {{1.0, 0.1, 1.0, 1.0}}, 0));  // one sample left
}

TEST_CASE("stratified split") {
    const Dataset d = make_blobs(4, 100, 2, 5.0, 0);
    const auto [train, test] = split_indices(d, 0.2, 0);
    CHECK(train.size() == 320);
    CHECK(test.size() == 80);
    CHECK(d.subset(test).class_counts() == std::vector<std::size_t>{20, 20, 20, 20});
    std::set<std::size_t> all(train.begin(), train.end());
    all.insert(test.begin(), test.end());
    CHECK(all.size() == 400);
    CHECK(split_indices(d, 0.2, 0) == split_indices(d, 0.2, 0));
}

TEST_CASE("csv round trip is exact") {
    const Dataset d = make_blobs(3, 7, 4, 5.0, 2);
    std::stringstream ss;
    write_csv(ss, d.samples, d.labels);
    const std::string text = ss.str();
    CHECK(text.rfind("label,f0,f1,f2,f3\n", 0) == 0);
    const Dataset back = read_csv(ss);
    CHECK(back.samples == d.samples);
    CHECK(back.labels == d.labels);
    CHECK(back.num_classes == 3);
    std::istringstream bad("label,f0\n0,abc\n");
    CHECK_THROWS(read_csv(bad));
}

}
