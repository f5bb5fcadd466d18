#include <cmath>
#include <limits>

#include <doctest.h>

#include "testutil.hpp"
#include "textgen/error.hpp"
#include "textgen/tensor.hpp"

using namespace textgen;
using testutil::check_gradients;

namespace {

Tensor rand_param(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
    Tensor t = Tensor::uniform(std::move(shape), rng, lo, hi);
    t.set_requires_grad(true);
    return t;
}

}  // namespace

TEST_SUITE("tensor") {
    TEST_CASE("shape bookkeeping and factories") {
        Tensor z = Tensor::zeros({2, 3});
        CHECK(z.numel() == 6);
        CHECK(z.rank() == 2);
        CHECK(z.data()[5] == 0.0);
        Tensor f = Tensor::full({2}, 3.5);
        CHECK(f.data()[0] == 3.5);
        CHECK(Tensor::scalar(2.0).value() == 2.0);
        CHECK_THROWS_AS(Tensor::from_data({2, 2}, {1.0, 2.0, 3.0}), DimensionError);
    }

    TEST_CASE("backward accumulates into grad and repeated backward doubles exactly") {
        Tensor x = Tensor::from_data({2}, {3.0, -1.0}, true);
        Tape tape;
        Tensor loss;
        {
            Tape::Scope scope(tape);
            loss = sum_all(mul(x, x));
        }
        tape.backward(loss);
        CHECK(x.grad()[0] == doctest::Approx(6.0).epsilon(1e-12));
        CHECK(x.grad()[1] == doctest::Approx(-2.0).epsilon(1e-12));
        tape.backward(loss);
        CHECK(x.grad()[0] == doctest::Approx(12.0).epsilon(1e-12));
        CHECK(x.grad()[1] == doctest::Approx(-4.0).epsilon(1e-12));
    }

    TEST_CASE("backward requires a scalar root") {
        Tensor x = Tensor::from_data({2}, {1.0, 2.0}, true);
        Tape tape;
        Tensor y;
        {
            Tape::Scope scope(tape);
            y = mul(x, x);
        }
        CHECK_THROWS_AS(tape.backward(y), ContractError);
    }

    TEST_CASE("ops run untraced without an active tape") {
        Tensor x = Tensor::from_data({2}, {1.0, 2.0}, true);
        Tensor y = mul(x, x);
        CHECK(y.data()[1] == 4.0);
        CHECK_FALSE(x.has_grad());
    }

    TEST_CASE("arithmetic forward values") {
        Tensor a = Tensor::from_data({2}, {1.0, 2.0});
        Tensor b = Tensor::from_data({2}, {10.0, 20.0});
        CHECK(add(a, b).data()[1] == 22.0);
        CHECK(sub(a, b).data()[0] == -9.0);
        CHECK(mul(a, b).data()[1] == 40.0);
        CHECK(affine(a, 2.0, 1.0).data()[0] == 3.0);
        CHECK(scale(a, -3.0).data()[1] == -6.0);
        CHECK_THROWS_AS(add(a, Tensor::zeros({3})), DimensionError);
    }

    TEST_CASE("elementwise and affine gradients") {
        Rng rng(11);
        Tensor a = rand_param({3, 2}, rng);
        Tensor b = rand_param({3, 2}, rng);
        Tensor w = Tensor::uniform({3, 2}, rng, -1.0, 1.0);
        check_gradients([&] { return sum_all(mul(add(a, b), w)); }, {a, b});
        check_gradients([&] { return sum_all(mul(sub(a, b), w)); }, {a, b});
        check_gradients([&] { return sum_all(mul(mul(a, b), w)); }, {a, b});
        check_gradients([&] { return sum_all(mul(affine(a, 1.7, -0.3), w)); }, {a});
        check_gradients([&] { return sum_all(mul(scale(a, -2.5), w)); }, {a});
    }

    TEST_CASE("add_bias broadcasts a trailing suffix") {
        Tensor x = Tensor::from_data({2, 2, 2}, {1, 2, 3, 4, 5, 6, 7, 8});
        Tensor bias = Tensor::from_data({2}, {10, 20});
        Tensor y = add_bias(x, bias);
        CHECK(y.data()[0] == 11.0);
        CHECK(y.data()[1] == 22.0);
        CHECK(y.data()[7] == 28.0);
        Tensor plane = Tensor::from_data({2, 2}, {1, 1, 2, 2});
        Tensor z = add_bias(x, plane);
        CHECK(z.data()[3] == 6.0);
        CHECK(z.data()[4] == 6.0);
        CHECK_THROWS_AS(add_bias(x, Tensor::zeros({3})), DimensionError);

        Rng rng(12);
        Tensor xx = rand_param({2, 3, 2}, rng);
        Tensor bb = rand_param({2}, rng);
        Tensor pp = rand_param({3, 2}, rng);
        Tensor w = Tensor::uniform({2, 3, 2}, rng, -1.0, 1.0);
        check_gradients([&] { return sum_all(mul(add_bias(xx, bb), w)); }, {xx, bb});
        check_gradients([&] { return sum_all(mul(add_bias(xx, pp), w)); }, {xx, pp});
    }

    TEST_CASE("matmul 2d forward and gradients") {
        Tensor a = Tensor::from_data({2, 3}, {1, 2, 3, 4, 5, 6});
        Tensor b = Tensor::from_data({3, 2}, {7, 8, 9, 10, 11, 12});
        Tensor c = matmul(a, b);
        CHECK(c.shape() == Shape{2, 2});
        CHECK(c.data()[0] == 58.0);
        CHECK(c.data()[3] == 154.0);
        CHECK_THROWS_AS(matmul(a, Tensor::zeros({2, 2})), DimensionError);

        Rng rng(13);
        Tensor aa = rand_param({3, 4}, rng);
        Tensor bb = rand_param({4, 2}, rng);
        Tensor w = Tensor::uniform({3, 2}, rng, -1.0, 1.0);
        check_gradients([&] { return sum_all(mul(matmul(aa, bb), w)); }, {aa, bb});
    }

    TEST_CASE("matmul batched 3d forward and gradients") {
        Rng rng(14);
        Tensor a = rand_param({2, 3, 4}, rng);
        Tensor b = rand_param({2, 4, 2}, rng);
        Tensor c = matmul(a, b);
        CHECK(c.shape() == Shape{2, 3, 2});
        // Batch 1 must be an independent 2-D product.
        double manual = 0.0;
        for (int k = 0; k < 4; ++k) manual += a.data()[12 + k] * b.data()[8 + 2 * k];
        CHECK(c.data()[6] == doctest::Approx(manual).epsilon(1e-12));
        CHECK_THROWS_AS(matmul(a, Tensor::zeros({3, 4, 2})), DimensionError);

        Tensor w = Tensor::uniform({2, 3, 2}, rng, -1.0, 1.0);
        check_gradients([&] { return sum_all(mul(matmul(a, b), w)); }, {a, b});
    }

    TEST_CASE("reshape and permute") {
        Tensor x = Tensor::from_data({2, 3}, {1, 2, 3, 4, 5, 6});
        Tensor r = reshape(x, {3, 2});
        CHECK(r.data()[4] == 5.0);
        CHECK_THROWS_AS(reshape(x, {4, 2}), DimensionError);

        Tensor p = permute(x, {1, 0});
        CHECK(p.shape() == Shape{3, 2});
        CHECK(p.data()[0] == 1.0);
        CHECK(p.data()[1] == 4.0);
        CHECK(p.data()[2] == 2.0);
        CHECK_THROWS_AS(permute(x, {0, 0}), DimensionError);

        Rng rng(15);
        Tensor a = rand_param({2, 3, 4}, rng);
        Tensor w = Tensor::uniform({4, 2, 3}, rng, -1.0, 1.0);
        check_gradients([&] { return sum_all(mul(permute(a, {2, 0, 1}), w)); }, {a});
        Tensor w2 = Tensor::uniform({6, 4}, rng, -1.0, 1.0);
        check_gradients([&] { return sum_all(mul(reshape(a, {6, 4}), w2)); }, {a});
    }

    TEST_CASE("concat joins along an axis") {
        Tensor a = Tensor::from_data({2, 2}, {1, 2, 3, 4});
        Tensor b = Tensor::from_data({1, 2}, {5, 6});
        Tensor c = concat({a, b}, 0);
        CHECK(c.shape() == Shape{3, 2});
        CHECK(c.data()[4] == 5.0);
        Tensor d = concat({a, a}, 1);
        CHECK(d.shape() == Shape{2, 4});
        CHECK(d.data()[2] == 1.0);
        CHECK(d.data()[3] == 2.0);
        CHECK_THROWS_AS(concat({a, Tensor::zeros({2, 3})}, 0), DimensionError);

        Rng rng(16);
        Tensor x = rand_param({2, 2}, rng);
        Tensor y = rand_param({3, 2}, rng);
        Tensor w = Tensor::uniform({5, 2}, rng, -1.0, 1.0);
        check_gradients([&] { return sum_all(mul(concat({x, y}, 0), w)); }, {x, y});
    }

    TEST_CASE("softmax rows sum to one and match direct computation") {
        Tensor x = Tensor::from_data({2, 3}, {1.0, 2.0, 3.0, -1.0, 0.0, 1.0});
        Tensor s = softmax(x);
        for (int r = 0; r < 2; ++r) {
            double sum = 0.0;
            for (int c = 0; c < 3; ++c) sum += s.data()[static_cast<size_t>(3 * r + c)];
            CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
        }
        const double e1 = std::exp(1.0), e2 = std::exp(2.0), e3 = std::exp(3.0);
        CHECK(s.data()[0] == doctest::Approx(e1 / (e1 + e2 + e3)).epsilon(1e-12));

        CHECK_THROWS_AS(softmax(Tensor::from_data({1, 2}, {std::nan(""), 0.0})), NumericError);

        Rng rng(17);
        Tensor a = rand_param({3, 4}, rng, -2.0, 2.0);
        Tensor w = Tensor::uniform({3, 4}, rng, -1.0, 1.0);
        check_gradients([&] { return sum_all(mul(softmax(a), w)); }, {a});
    }

    TEST_CASE("causal mask zeroes the strict upper triangle after softmax") {
        Tensor x = Tensor::full({1, 3, 3}, 0.7);
        Tensor masked = causal_mask(x);
        CHECK(masked.data()[1] == -std::numeric_limits<double>::infinity());
        CHECK(masked.data()[0] == 0.7);
        Tensor att = softmax(masked);
        CHECK(att.data()[0] == 1.0);  // row 0 sees only itself, exactly
        CHECK(att.data()[1] == 0.0);
        CHECK(att.data()[2] == 0.0);
        CHECK(att.data()[3] == 0.5);
        CHECK_THROWS_AS(causal_mask(Tensor::zeros({2, 3})), DimensionError);

        Rng rng(18);
        Tensor a = rand_param({2, 3, 3}, rng);
        Tensor w = Tensor::uniform({2, 3, 3}, rng, -1.0, 1.0);
        check_gradients([&] { return sum_all(mul(softmax(causal_mask(a)), w)); }, {a});
    }

    TEST_CASE("cross entropy equals manual negative log softmax") {
        Tensor logits = Tensor::from_data({2, 3}, {0.2, -0.1, 0.5, 1.0, 2.0, 3.0});
        Tensor loss = cross_entropy(logits, {2, 0});
        auto logp = [&](int row, int target) {
            double mx = -1e300, sum = 0.0;
            for (int c = 0; c < 3; ++c) mx = std::max(mx, logits.data()[3 * row + c]);
            for (int c = 0; c < 3; ++c) sum += std::exp(logits.data()[3 * row + c] - mx);
            return logits.data()[3 * row + target] - mx - std::log(sum);
        };
        CHECK(loss.value() == doctest::Approx(-(logp(0, 2) + logp(1, 0)) / 2).epsilon(1e-12));
        CHECK_THROWS_AS(cross_entropy(logits, {3, 0}), IndexError);

        Rng rng(19);
        Tensor a = rand_param({4, 5}, rng);
        check_gradients([&] { return cross_entropy(a, {1, 4, 0, 2}); }, {a});
    }

    TEST_CASE("masked cross entropy averages only kept rows") {
        Tensor logits = Tensor::from_data({2, 3}, {0.2, -0.1, 0.5, 1.0, 2.0, 3.0});
        Tensor full = cross_entropy(logits, {2, 0});
        Tensor only_first = cross_entropy_masked(logits, {2, 0}, {1, 0});
        Tensor both = cross_entropy_masked(logits, {2, 0}, {1, 1});
        CHECK(both.value() == doctest::Approx(full.value()).epsilon(1e-12));
        CHECK(only_first.value() != doctest::Approx(full.value()).epsilon(1e-9));
        CHECK_THROWS_AS(cross_entropy_masked(logits, {2, 0}, {0, 0}), ContractError);

        Rng rng(20);
        Tensor a = rand_param({4, 3}, rng);
        check_gradients([&] { return cross_entropy_masked(a, {1, 2, 0, 1}, {1, 0, 1, 0}); },
                        {a});
    }

    TEST_CASE("layernorm normalizes the last axis") {
        Rng rng(21);
        Tensor x = rand_param({3, 5}, rng, -2.0, 2.0);
        Tensor g = rand_param({5}, rng, 0.5, 1.5);
        Tensor b = rand_param({5}, rng, -0.5, 0.5);
        Tensor y = layernorm(x, g, b);

        // With unit gain and zero bias the rows have mean 0 and variance ~1.
        Tensor y0 = layernorm(x, Tensor::full({5}, 1.0), Tensor::zeros({5}));
        for (int r = 0; r < 3; ++r) {
            double mean = 0.0, var = 0.0;
            for (int c = 0; c < 5; ++c) mean += y0.data()[5 * r + c];
            mean /= 5;
            for (int c = 0; c < 5; ++c) {
                const double d = y0.data()[5 * r + c] - mean;
                var += d * d;
            }
            var /= 5;
            CHECK(mean == doctest::Approx(0.0).epsilon(1e-10));
            CHECK(var == doctest::Approx(1.0).epsilon(1e-4));
        }

        Tensor w = Tensor::uniform({3, 5}, rng, -1.0, 1.0);
        check_gradients([&] { return sum_all(mul(layernorm(x, g, b), w)); }, {x, g, b});
    }

    TEST_CASE("pointwise nonlinearities") {
        Tensor x = Tensor::from_data({3}, {-1.0, 0.0, 2.0});
        Tensor y = gelu(x);
        CHECK(y.data()[1] == 0.0);
        CHECK(y.data()[2] == doctest::Approx(2.0 * 0.5 * (1.0 + std::erf(2.0 / std::sqrt(2.0))))
                                 .epsilon(1e-12));
        CHECK(textgen::tanh(x).data()[2] == doctest::Approx(std::tanh(2.0)).epsilon(1e-12));
        CHECK(sigmoid(x).data()[0] == doctest::Approx(1.0 / (1.0 + std::exp(1.0))).epsilon(1e-12));
        CHECK(log(Tensor::from_data({1}, {std::exp(1.0)})).value() ==
              doctest::Approx(1.0).epsilon(1e-12));
        CHECK_THROWS_AS(log(Tensor::from_data({1}, {0.0})), NumericError);

        Rng rng(22);
        Tensor a = rand_param({2, 4}, rng, -2.0, 2.0);
        Tensor pos = rand_param({2, 4}, rng, 0.1, 3.0);
        Tensor w = Tensor::uniform({2, 4}, rng, -1.0, 1.0);
        check_gradients([&] { return sum_all(mul(gelu(a), w)); }, {a});
        check_gradients([&] { return sum_all(mul(textgen::tanh(a), w)); }, {a});
        check_gradients([&] { return sum_all(mul(sigmoid(a), w)); }, {a});
        check_gradients([&] { return sum_all(mul(log(pos), w)); }, {pos});
    }

    TEST_CASE("clamp limits values and passes gradient strictly inside") {
        Tensor x = Tensor::from_data({4}, {-2.0, 0.25, 0.75, 2.0});
        Tensor y = clamp(x, 0.0, 1.0);
        CHECK(y.data()[0] == 0.0);
        CHECK(y.data()[1] == 0.25);
        CHECK(y.data()[3] == 1.0);
        CHECK_THROWS_AS(clamp(x, 1.0, 0.0), ParameterError);

        Rng rng(23);
        // Keep sample points away from the clamp edges so FD is smooth.
        Tensor a = rand_param({6}, rng, 0.1, 0.9);
        Tensor b = rand_param({6}, rng, 1.5, 2.5);
        Tensor w = Tensor::uniform({6}, rng, -1.0, 1.0);
        check_gradients([&] { return sum_all(mul(clamp(a, 0.0, 1.0), w)); }, {a});
        check_gradients([&] { return sum_all(mul(clamp(b, 0.0, 1.0), w)); }, {b});
    }

    TEST_CASE("reductions") {
        Tensor x = Tensor::from_data({2, 3}, {1, 2, 3, 4, 5, 6});
        CHECK(sum_all(x).value() == 21.0);
        CHECK(mean_all(x).value() == 3.5);
        Tensor m0 = mean_axis(x, 0);
        CHECK(m0.shape() == Shape{3});
        CHECK(m0.data()[0] == 2.5);
        Tensor m1 = mean_axis(x, 1);
        CHECK(m1.shape() == Shape{2});
        CHECK(m1.data()[1] == 5.0);
        CHECK_THROWS_AS(mean_axis(x, 2), DimensionError);

        Rng rng(24);
        Tensor a = rand_param({2, 3, 4}, rng);
        Tensor w = Tensor::uniform({2, 4}, rng, -1.0, 1.0);
        check_gradients([&] { return sum_all(mul(mean_axis(a, 1), w)); }, {a});
        check_gradients([&] { return mean_all(a); }, {a});
        check_gradients([&] { return sum_all(a); }, {a});
    }

    TEST_CASE("embedding lookup gathers rows and scatters gradient") {
        Tensor table = Tensor::from_data({3, 2}, {1, 2, 3, 4, 5, 6}, true);
        Tensor rows = embedding_lookup(table, {2, 0, 2});
        CHECK(rows.shape() == Shape{3, 2});
        CHECK(rows.data()[0] == 5.0);
        CHECK(rows.data()[2] == 1.0);
        CHECK_THROWS_AS(embedding_lookup(table, {3}), IndexError);

        Rng rng(25);
        Tensor t = rand_param({4, 3}, rng);
        Tensor w = Tensor::uniform({5, 3}, rng, -1.0, 1.0);
        // Repeated ids force gradient accumulation into one row.
        check_gradients([&] { return sum_all(mul(embedding_lookup(t, {1, 3, 1, 0, 1}), w)); },
                        {t});
    }

    TEST_CASE("dropout is identity in eval mode and scales kept entries") {
        Rng rng(26);
        Tensor x = Tensor::full({1000}, 1.0);
        Tensor eval_out = dropout(x, 0.5, rng, false);
        CHECK(eval_out.data() == x.data());
        Tensor train_out = dropout(x, 0.25, rng, true);
        int kept = 0;
        for (double v : train_out.data()) {
            if (v != 0.0) {
                CHECK(v == doctest::Approx(1.0 / 0.75).epsilon(1e-12));
                ++kept;
            }
        }
        CHECK(kept > 650);
        CHECK(kept < 850);
        CHECK_THROWS_AS(dropout(x, 1.0, rng, true), ParameterError);

        // Deterministic mask via a reseeded stream makes FD valid.
        Tensor a = rand_param({20}, rng);
        Tensor w = Tensor::uniform({20}, rng, -1.0, 1.0);
        check_gradients(
            [&] {
                Rng fixed(99, "dropout-fd");
                return sum_all(mul(dropout(a, 0.3, fixed, true), w));
            },
            {a});
    }

    TEST_CASE("straight-through onehot: hard forward, soft backward") {
        Tensor soft = Tensor::from_data({2, 3}, {0.2, 0.5, 0.3, 0.1, 0.1, 0.8}, true);
        Tensor hard = straight_through_onehot(soft);
        CHECK(hard.data() == std::vector<double>{0, 1, 0, 0, 0, 1});

        // Ties resolve to the lowest index.
        Tensor tie = straight_through_onehot(Tensor::from_data({1, 2}, {0.5, 0.5}));
        CHECK(tie.data() == std::vector<double>{1, 0});

        Rng rng(27);
        Tensor w = Tensor::uniform({2, 3}, rng, -1.0, 1.0);
        Tape tape;
        Tensor st_loss, soft_loss;
        {
            Tape::Scope scope(tape);
            st_loss = sum_all(mul(straight_through_onehot(soft), w));
        }
        tape.backward(st_loss);
        const std::vector<double> st_grad = soft.grad();
        soft.zero_grad();
        Tape tape2;
        {
            Tape::Scope scope(tape2);
            soft_loss = sum_all(mul(soft, w));
        }
        tape2.backward(soft_loss);
        CHECK(st_grad == soft.grad());  // exact, by definition
    }

    TEST_CASE("detach blocks gradient flow") {
        Tensor x = Tensor::from_data({2}, {1.0, 2.0}, true);
        Tape tape;
        Tensor loss;
        {
            Tape::Scope scope(tape);
            loss = sum_all(mul(detach(x), x));
        }
        tape.backward(loss);
        // Only the traced factor contributes: d/dx (c * x) = c = value of x.
        CHECK(x.grad() == std::vector<double>{1.0, 2.0});
    }
}
