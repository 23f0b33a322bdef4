#include <cmath>
#include <sstream>

#include "doctest.h"
#include "gencal/nets.hpp"
#include "support.hpp"

using namespace gencal;

namespace {

void zero_all(NamedTensors params) {
    for (auto& [name, t] : params)
        for (double& v : t.mutable_data()) v = 0.0;
}

}  // namespace

TEST_SUITE("nets") {

TEST_CASE("zero-weight extractor without normalization outputs zeros") {
    Rng rng = make_rng(0);
    FeatureExtractor f({5, {7, 6}, 4, false}, rng);
    zero_all(f.named_parameters("F."));
    std::mt19937_64 g(1);
    const Tensor out = f(testing::random_tensor({3, 5}, g));
    CHECK(out.shape() == Shape{3, 4});
    for (double v : out.data()) CHECK(v == 0.0);
}

TEST_CASE("normalized features have unit rows") {
    Rng rng = make_rng(1);
    FeatureExtractor f({5, {16, 16}, 8, true}, rng);
    std::mt19937_64 g(2);
    const Tensor out = f(testing::random_tensor({10, 5}, g));
    for (std::size_t r = 0; r < 10; ++r) {
        double s = 0.0;
        for (std::size_t c = 0; c < 8; ++c) s += out.at(r, c) * out.at(r, c);
        CHECK(std::sqrt(s) == doctest::Approx(1.0).epsilon(1e-9));
    }
}

TEST_CASE("feature gradient w.r.t. first-layer weights matches finite differences") {
    for (bool normalize : {false, true}) {
        Rng rng = make_rng(2);
        FeatureExtractor f({4, {8, 8}, 3, normalize}, rng);
        std::mt19937_64 g(3);
        const Tensor x = testing::random_tensor({5, 4}, g);
        std::vector<Tensor> params{f.layers()[0].weight};
        const auto res = finite_diff_check_params([&] { return sum(f(x)); }, params, 1e-5);
        CHECK(res.coords_checked == 32);
        CHECK(res.max_rel_error < 1e-4);
    }
}

TEST_CASE("clustering head rows are probabilities") {
    Rng rng = make_rng(3);
    ClusteringHead c({6, 10, 4}, rng);
    std::mt19937_64 g(4);
    const Tensor p = c(testing::random_tensor({9, 6}, g));
    for (std::size_t r = 0; r < 9; ++r) {
        double s = 0.0;
        for (std::size_t k = 0; k < 4; ++k) {
            CHECK(p.at(r, k) >= 0.0);
            s += p.at(r, k);
        }
        CHECK(std::abs(s - 1.0) < 1e-9);
    }

    zero_all(c.named_parameters("C."));
    const Tensor u = c(testing::random_tensor({3, 6}, g));
    for (double v : u.data()) CHECK(v == doctest::Approx(0.25));
}

TEST_CASE("argmax is stable under a constant shift of the scores") {
    Rng rng = make_rng(4);
    ClusteringHead c({6, 10, 3}, rng);
    std::mt19937_64 g(5);
    const Tensor feats = testing::random_tensor({20, 6}, g);
    const Tensor s = c.scores(feats);
    const Tensor a = softmax_rows(s);
    const Tensor b = softmax_rows(add_scalar(s, 7.5));
    CHECK(testing::max_abs_diff(a.data(), b.data()) < 1e-12);
}

TEST_CASE("time embedding layout") {
    const std::vector<int> t{0, 3};
    const Tensor e = time_embedding(t, 4);
    CHECK(e.at(0, 0) == 0.0);
    CHECK(e.at(0, 2) == 1.0);
    CHECK(e.at(1, 0) == doctest::Approx(std::sin(3.0)));
    CHECK(e.at(1, 3) == doctest::Approx(std::cos(3.0 * 0.01)));
    CHECK_THROWS(time_embedding(t, 3));
}

TEST_CASE("denoiser forward is deterministic and shape preserving") {
    Rng rng = make_rng(5);
    Denoiser d({3, 2, 10, {16, 16, 16}, 8, 4}, rng);
    std::mt19937_64 g(6);
    const Tensor x = testing::random_tensor({4, 3}, g);
    const std::vector<int> t{1, 5, 10, 2}, y{0, 1, 1, 0};
    const Tensor a = d.predict_noise(x, t, y);
    const Tensor b = d.predict_noise(x, t, y);
    CHECK(a.shape() == x.shape());
    CHECK(testing::max_abs_diff(a.data(), b.data()) == 0.0);
    CHECK_THROWS_AS(d.predict_noise(x, std::vector<int>{0, 1, 1, 1}, y), std::out_of_range);
    CHECK_THROWS_AS(d.predict_noise(x, std::vector<int>{11, 1, 1, 1}, y), std::out_of_range);
    CHECK_THROWS_AS(d.predict_noise(x, t, std::vector<int>{0, 2, 0, 0}), std::out_of_range);
}

TEST_CASE("changing one label embedding row only moves that class's outputs") {
    Rng rng = make_rng(6);
    Denoiser d({3, 3, 10, {16, 16}, 8, 4}, rng);
    std::mt19937_64 g(7);
    const Tensor x = testing::random_tensor({6, 3}, g);
    const std::vector<int> t{1, 2, 3, 4, 5, 6}, y{0, 1, 2, 0, 1, 2};
    const Tensor before = d.predict_noise(x, t, y);
    auto table = d.label_table().mutable_data();
    for (std::size_t j = 0; j < 4; ++j) table[1 * 4 + j] += 0.5;
    const Tensor after = d.predict_noise(x, t, y);
    for (std::size_t r = 0; r < 6; ++r) {
        double diff = 0.0;
        for (std::size_t c = 0; c < 3; ++c) diff += std::abs(after.at(r, c) - before.at(r, c));
        if (y[r] == 1)
            CHECK(diff > 0.0);
        else
            CHECK(diff == 0.0);
    }
}

TEST_CASE("denoiser parameter gradients match finite differences") {
    Rng rng = make_rng(7);
    Denoiser d({3, 2, 10, {12, 12, 12}, 8, 4}, rng);
    std::mt19937_64 g(8);
    const Tensor x = testing::random_tensor({5, 3}, g);
    const std::vector<int> t{1, 4, 7, 9, 10}, y{0, 1, 1, 0, 1};
    auto params = values_of(d.named_parameters("G."));
    const auto res = finite_diff_check_params([&] { return mean(pow(d.predict_noise(x, t, y), 2.0)); }, params,
                                              1e-5, 12, 1);
    CHECK(res.coords_checked > 50);
    CHECK(res.max_rel_error < 1e-4);
}

TEST_CASE("default networks stay under the desk-scale parameter budget") {
    Rng rng = make_rng(8);
    ModelSet m;
    m.feature = FeatureExtractor({64, {128, 128}, 32, true}, rng);
    m.head = ClusteringHead({32, 64, 4}, rng);
    m.denoiser = Denoiser({64, 4, 200, {256, 256, 256}, 32, 32}, rng);
    CHECK(parameter_count(m.named_parameters()) < 500000);
    CHECK(parameter_count(m.feature.named_parameters("")) == 64 * 128 + 128 + 128 * 128 + 128 + 128 * 32 + 32);
    CHECK(parameter_count(m.head.named_parameters("")) == 32 * 64 + 64 + 64 * 4 + 4);
}

TEST_CASE("data norm round trip") {
    const Matrix raw(2, 2, std::vector<double>{1, 2, 3, 10});
    const DataNorm n = DataNorm::fit(raw);
    const Matrix z = n.apply(raw);
    double s = 0.0;
    for (double v : z.values) s += v;
    CHECK(std::abs(s) < 1e-12);
    CHECK(testing::max_abs_diff(n.invert(z).values, raw.values) < 1e-12);
    const DataNorm flat = DataNorm::fit(Matrix(2, 2, 3.0));
    CHECK(flat.scale == 1.0);
}

TEST_CASE("checkpoint round trip and layout") {
    Rng rng = make_rng(9);
    ModelSet m;
    m.feature = FeatureExtractor({3, {5}, 2, true}, rng);
    m.head = ClusteringHead({2, 4, 2}, rng);
    m.denoiser = Denoiser({3, 2, 10, {6, 6}, 4, 2}, rng);
    m.norm = DataNorm{0.5, 2.0};

    std::stringstream ss;
    write_checkpoint(ss, checkpoint_entries(m));
    const std::string bytes = ss.str();
    CHECK(bytes.substr(0, 8) == "GENCALCK");
    CHECK(static_cast<unsigned char>(bytes[8]) == kCheckpointVersion);
    CHECK(bytes == checkpoint_bytes(checkpoint_entries(m)));

    Rng other_rng = make_rng(10);
    ModelSet other;
    other.feature = FeatureExtractor({3, {5}, 2, true}, other_rng);
    other.head = ClusteringHead({2, 4, 2}, other_rng);
    other.denoiser = Denoiser({3, 2, 10, {6, 6}, 4, 2}, other_rng);
    CHECK(hash_values(values_of(other.named_parameters())) != hash_values(values_of(m.named_parameters())));
    load_checkpoint_entries(other, read_checkpoint(ss));
    CHECK(checkpoint_bytes(checkpoint_entries(other)) == bytes);
    CHECK(other.norm.scale == 2.0);

    std::istringstream bad_magic(std::string("NOTACKPT") + bytes.substr(8));
    CHECK_THROWS(read_checkpoint(bad_magic));
    std::istringstream truncated(bytes.substr(0, bytes.size() - 3));
    CHECK_THROWS(read_checkpoint(truncated));

    ModelSet wrong = other.clone();
    wrong.head = ClusteringHead({2, 5, 2}, rng);
    std::istringstream again(bytes);
    CHECK_THROWS(load_checkpoint_entries(wrong, read_checkpoint(again)));
}

TEST_CASE("clones are independent and hashes see single-bit changes") {
    Rng rng = make_rng(11);
    FeatureExtractor f({3, {4}, 2, true}, rng);
    FeatureExtractor g = f.clone();
    const auto hf = hash_values(values_of(f.named_parameters("")));
    CHECK(hash_values(values_of(g.named_parameters(""))) == hf);
    auto w = g.layers()[0].weight.mutable_data();
    w[0] = std::nextafter(w[0], 1e9);
    CHECK(hash_values(values_of(g.named_parameters(""))) != hf);
    CHECK(hash_values(values_of(f.named_parameters(""))) == hf);
    CHECK(hex64(0xabcULL) == "0000000000000abc");
}

}
