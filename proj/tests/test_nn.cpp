#include "doctest.h"

#include "ablab/error.hpp"
#include "ablab/linalg.hpp"
#include "ablab/nn.hpp"
#include "ablab/rng.hpp"
#include "ablab/tensor.hpp"

#include <cmath>
#include <cstddef>
#include <vector>

using namespace ablab;

namespace {

Tensor randn(Rng &rng, const Shape &shape) {
    Tensor t(shape);
    rng.fill_normal(t.data(), t.size());
    return t;
}

double mean_loss(const nn::Model &m, const Tensor &x, const std::vector<std::size_t> &y) {
    nn::ForwardCache cache;
    return m.forward(x, y, cache);
}

// Central finite differences against the analytic gradient, every entry of
// every tensor that receives gradient. backward() returns per-batch sums, so
// the analytic value is grad / batch.
double fd_worst_error(nn::Model &m, const Tensor &x, const std::vector<std::size_t> &y) {
    nn::ForwardCache cache;
    m.forward(x, y, cache);
    nn::Gradients grads = m.backward(cache);
    const double batch = static_cast<double>(y.size());
    const double h = 1e-5;
    double worst = 0.0;

    auto probe = [&](Tensor &values, const Tensor &grad) {
        REQUIRE(values.shape() == grad.shape());
        for (std::size_t e = 0; e < values.size(); ++e) {
            const double orig = values[e];
            values[e] = orig + h;
            const double lp = mean_loss(m, x, y);
            values[e] = orig - h;
            const double lm = mean_loss(m, x, y);
            values[e] = orig;
            const double fd = (lp - lm) / (2.0 * h);
            worst = std::max(worst, std::fabs(fd - grad[e] / batch));
        }
    };

    for (std::size_t i = 0; i < m.params().size(); ++i) {
        nn::Parameter &p = m.params()[i];
        if (!p.is_factored()) {
            probe(p.full(), std::get<Tensor>(grads[i]));
            continue;
        }
        const auto &fg = std::get<nn::FactoredGrad>(grads[i]);
        if (p.factored().train_target == nn::TrainTarget::A) {
            probe(p.factored().a, fg.a);
            for (std::size_t e = 0; e < fg.b.size(); ++e)
                CHECK(fg.b[e] == 0.0);
        } else {
            probe(p.factored().b, fg.b);
            for (std::size_t e = 0; e < fg.a.size(); ++e)
                CHECK(fg.a[e] == 0.0);
        }
    }
    return worst;
}

nn::Model small_mlp(std::uint64_t seed) {
    return nn::Model::build({nn::Linear{5, 7, true}, nn::Relu{}, nn::Linear{7, 3, true}}, seed);
}

} // namespace

TEST_CASE("flatten_to_2d keeps the view at least as tall as wide") {
    Rng rng(11);
    Tensor wide = randn(rng, {10, 50});
    nn::Flat2d f = nn::flatten_to_2d(wide);
    CHECK(f.transposed);
    REQUIRE(f.m.rows() == 50);
    REQUIRE(f.m.cols() == 10);
    CHECK(f.m(3, 7) == wide(7, 3));
    Tensor back = nn::unflatten_from_2d(f.m, wide.shape(), f.transposed);
    CHECK(back == wide);

    Tensor conv = randn(rng, {8, 4, 3, 3});
    nn::Flat2d fc = nn::flatten_to_2d(conv);
    CHECK(fc.transposed);
    REQUIRE(fc.m.rows() == 36);
    REQUIRE(fc.m.cols() == 8);
    CHECK(nn::unflatten_from_2d(fc.m, conv.shape(), fc.transposed) == conv);

    Tensor tall = randn(rng, {64, 32});
    nn::Flat2d ft = nn::flatten_to_2d(tall);
    CHECK_FALSE(ft.transposed);
    CHECK(ft.m == tall);

    CHECK_THROWS_AS(nn::flatten_to_2d(randn(rng, {9})), ShapeError);
}

TEST_CASE("ab_decompose splits the singular spectrum between the factors") {
    Rng rng(22);
    nn::Parameter p;
    p.name = "w";
    p.orig_shape = {10, 50};
    p.decomposable = true;
    p.repr = nn::FullRank{randn(rng, {10, 50})};

    nn::Parameter q = nn::ab_decompose(p, 0.0, nn::TrainTarget::A);
    REQUIRE(q.is_factored());
    CHECK(q.transposed);
    CHECK(q.factored().train_target == nn::TrainTarget::A);
    const Tensor &a = q.factored().a;
    const Tensor &b = q.factored().b;
    REQUIRE(a.rows() == 50);
    REQUIRE(a.cols() == 10);
    REQUIRE(b.rows() == 10);
    REQUIRE(b.cols() == 10);

    // both factors carry sqrt(s): the Gram matrices of a's columns and b's
    // rows are the same diagonal spectrum
    Tensor ga = linalg::matmul(linalg::transpose(a), a);
    Tensor gb = linalg::matmul(b, linalg::transpose(b));
    for (std::size_t i = 0; i < ga.rows(); ++i)
        for (std::size_t j = 0; j < ga.cols(); ++j) {
            if (i == j) {
                CHECK(ga(i, j) == doctest::Approx(gb(i, j)).epsilon(1e-9));
                if (i + 1 < ga.rows())
                    CHECK(ga(i, i) >= ga(i + 1, i + 1));
            } else {
                CHECK(std::fabs(ga(i, j)) <= 1e-9 * ga(0, 0));
                CHECK(std::fabs(gb(i, j)) <= 1e-9 * gb(0, 0));
            }
        }

    nn::Parameter r = nn::reconstruct(q);
    REQUIRE_FALSE(r.is_factored());
    CHECK_FALSE(r.transposed);
    REQUIRE(r.full().shape() == p.full().shape());
    CHECK(linalg::frobenius_dist(r.full(), p.full()) <= 1e-10 * linalg::frobenius_norm(p.full()));
}

TEST_CASE("ab_decompose rejects misuse and flags degenerate weights") {
    nn::Parameter bias;
    bias.name = "b";
    bias.orig_shape = {4};
    bias.decomposable = false;
    bias.repr = nn::FullRank{Tensor::zeros({4})};
    CHECK_THROWS_AS(nn::ab_decompose(bias, 0.1, nn::TrainTarget::B), ConfigError);
    CHECK_THROWS_AS(nn::reconstruct(bias), ConfigError);

    nn::Parameter zero;
    zero.name = "w";
    zero.orig_shape = {6, 3};
    zero.decomposable = true;
    zero.repr = nn::FullRank{Tensor::zeros({6, 3})};
    bool degenerate = false;
    nn::Parameter out = nn::ab_decompose(zero, 0.1, nn::TrainTarget::B, &degenerate);
    CHECK(degenerate);
    CHECK_FALSE(out.is_factored());

    Rng rng(33);
    nn::Parameter ok;
    ok.name = "w";
    ok.orig_shape = {6, 3};
    ok.decomposable = true;
    ok.repr = nn::FullRank{randn(rng, {6, 3})};
    nn::Parameter f = nn::ab_decompose(ok, 0.0, nn::TrainTarget::B);
    CHECK_THROWS_AS(nn::ab_decompose(f, 0.0, nn::TrainTarget::B), ConfigError);
}

TEST_CASE("model construction is deterministic with orthogonal weights") {
    nn::Model m = small_mlp(7);
    nn::Model same = small_mlp(7);
    nn::Model other = small_mlp(8);
    REQUIRE(m.params().size() == 4);
    CHECK(m.params()[0].name == "layer0.weight");
    CHECK(m.params()[1].name == "layer0.bias");
    CHECK(m.params()[2].name == "layer2.weight");
    for (std::size_t i = 0; i < m.params().size(); ++i) {
        CHECK(m.params()[i].full() == same.params()[i].full());
        if (m.params()[i].decomposable)
            CHECK_FALSE(m.params()[i].full() == other.params()[i].full());
        else
            for (std::size_t e = 0; e < m.params()[i].full().size(); ++e)
                CHECK(m.params()[i].full()[e] == 0.0);
    }
    Tensor w0 = m.params()[0].full();
    Tensor gram = linalg::matmul(linalg::transpose(w0), w0);
    for (std::size_t i = 0; i < gram.rows(); ++i)
        for (std::size_t j = 0; j < gram.cols(); ++j)
            CHECK(std::fabs(gram(i, j) - (i == j ? 1.0 : 0.0)) <= 1e-12);

    nn::Model conv = nn::Model::build(
        {nn::Conv2d{2, 3, 3, 3, true}, nn::Relu{}, nn::Flatten{}, nn::Linear{48, 2, true}}, 5);
    REQUIRE(conv.params()[0].full().shape() == Shape{3, 2, 3, 3});
}

TEST_CASE("analytic gradients match finite differences on an mlp") {
    nn::Model m = small_mlp(1234);
    Rng rng(55);
    Tensor x = randn(rng, {4, 5});
    std::vector<std::size_t> y{0, 1, 2, 0};
    CHECK(fd_worst_error(m, x, y) <= 1e-5);
}

TEST_CASE("analytic gradients match finite differences on a conv net") {
    nn::Model m = nn::Model::build(
        {nn::Conv2d{2, 3, 3, 3, true}, nn::Relu{}, nn::Flatten{}, nn::Linear{48, 2, true}}, 99);
    Rng rng(66);
    Tensor x = randn(rng, {3, 2, 4, 4});
    std::vector<std::size_t> y{0, 1, 1};
    CHECK(fd_worst_error(m, x, y) <= 1e-5);
}

TEST_CASE("factored gradients match finite differences, frozen factor exactly zero") {
    Rng rng(77);
    Tensor x = randn(rng, {4, 5});
    std::vector<std::size_t> y{2, 1, 0, 1};
    for (nn::TrainTarget target : {nn::TrainTarget::A, nn::TrainTarget::B}) {
        nn::Model m = small_mlp(4321);
        REQUIRE(m.decompose_all(0.0, target) == 2);
        CHECK(fd_worst_error(m, x, y) <= 1e-5);
    }
}

TEST_CASE("factored gradients match finite differences on a conv net") {
    nn::Model m = nn::Model::build(
        {nn::Conv2d{2, 3, 3, 3, true}, nn::Relu{}, nn::Flatten{}, nn::Linear{48, 2, true}}, 31);
    REQUIRE(m.decompose_all(0.0, nn::TrainTarget::B) == 2);
    Rng rng(88);
    Tensor x = randn(rng, {3, 2, 4, 4});
    std::vector<std::size_t> y{1, 0, 1};
    CHECK(fd_worst_error(m, x, y) <= 1e-5);
}

TEST_CASE("lossless decomposition preserves the forward pass") {
    Rng rng(110);
    Tensor x = randn(rng, {6, 5});
    std::vector<std::size_t> y{0, 1, 2, 0, 1, 2};

    nn::Model m = small_mlp(2024);
    const Tensor before = m.forward_logits(x);
    const double loss_before = mean_loss(m, x, y);
    std::vector<Tensor> originals;
    for (const auto &p : m.params())
        originals.push_back(p.full());

    REQUIRE(m.decompose_all(0.0, nn::TrainTarget::B) == 2);
    const Tensor after = m.forward_logits(x);
    REQUIRE(after.shape() == before.shape());
    for (std::size_t e = 0; e < after.size(); ++e)
        CHECK(std::fabs(after[e] - before[e]) <= 1e-10);
    CHECK(std::fabs(mean_loss(m, x, y) - loss_before) <= 1e-10);

    m.reconstruct_all();
    for (std::size_t i = 0; i < m.params().size(); ++i) {
        REQUIRE_FALSE(m.params()[i].is_factored());
        CHECK(linalg::frobenius_dist(m.params()[i].full(), originals[i]) <=
              1e-10 * std::max(1.0, linalg::frobenius_norm(originals[i])));
    }
}

TEST_CASE("element counting tracks the live representation") {
    nn::Model m = nn::Model::build({nn::Linear{32, 64, true}, nn::Relu{}, nn::Linear{64, 10, true}},
                                   3);
    CHECK(m.full_element_count() == 64 * 32 + 64 + 10 * 64 + 10);
    CHECK(m.element_count() == m.full_element_count());

    REQUIRE(m.decompose_all(0.0, nn::TrainTarget::B) == 2);
    // (64,32) stays tall: a 64x32, b 32x32. (10,64) flips to (64,10): a 64x10, b 10x10.
    CHECK(m.element_count() == (64 * 32 + 32 * 32) + (64 * 10 + 10 * 10) + 64 + 10);
    CHECK(m.full_element_count() == 64 * 32 + 64 + 10 * 64 + 10);

    m.reconstruct_all();
    CHECK(m.element_count() == m.full_element_count());
}

TEST_CASE("decompose_all skips all-zero weights and reports the factored count") {
    nn::Model m = small_mlp(12);
    m.params()[0].full() = Tensor::zeros(m.params()[0].full().shape());
    CHECK(m.decompose_all(0.1, nn::TrainTarget::A) == 1);
    CHECK_FALSE(m.params()[0].is_factored());
    CHECK(m.params()[2].is_factored());
}

TEST_CASE("softmax cross-entropy values and gradient sums") {
    Tensor logits({2, 3});
    double loss = nn::softmax_cross_entropy(logits, {0, 2});
    CHECK(loss == doctest::Approx(std::log(3.0)).epsilon(1e-12));

    Tensor dsum;
    nn::softmax_cross_entropy(logits, {0, 2}, &dsum);
    REQUIRE(dsum.shape() == Shape{2, 3});
    CHECK(dsum(0, 0) == doctest::Approx(1.0 / 3.0 - 1.0).epsilon(1e-12));
    CHECK(dsum(0, 1) == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
    CHECK(dsum(1, 2) == doctest::Approx(1.0 / 3.0 - 1.0).epsilon(1e-12));

    // shift invariance per row
    Tensor shifted({2, 3}, {5.0, 5.0, 5.0, -2.0, -2.0, -2.0});
    CHECK(nn::softmax_cross_entropy(shifted, {1, 0}) ==
          doctest::Approx(std::log(3.0)).epsilon(1e-12));

    CHECK_THROWS_AS(nn::softmax_cross_entropy(logits, {0}), ShapeError);
    CHECK_THROWS_AS(nn::softmax_cross_entropy(logits, {0, 3}), ConfigError);
}

TEST_CASE("accuracy breaks logit ties toward the lowest class index") {
    nn::Model m = nn::Model::build({nn::Linear{2, 3, false}}, 1);
    m.params()[0].full() = Tensor({3, 2}, {1.0, 0.0, 1.0, 0.0, 0.0, 1.0});
    Tensor x({2, 2}, {1.0, 0.0, 0.0, 1.0});
    // row 0 logits (1,1,0): tie between classes 0 and 1 -> predict 0
    CHECK(m.accuracy(x, {0, 2}) == 1.0);
    CHECK(m.accuracy(x, {1, 2}) == 0.5);
    CHECK_THROWS_AS(m.accuracy(x, {0}), ShapeError);
}
