#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "hiadv/tensor.hpp"
#include "testutil.hpp"

using namespace hiadv;

TEST_CASE("matmul with identity returns the operand") {
    Tensor eye = Tensor::zeros(3, 3);
    for (int i = 0; i < 3; ++i) eye.values()[static_cast<std::size_t>(i) * 3 + i] = 1.0;
    Rng rng(11);
    const Tensor x = testutil::random_tensor(rng, 3, 5, -2, 2, false);
    const Tensor y = matmul(eye, x);
    for (std::size_t i = 0; i < x.values().size(); ++i)
        CHECK(y.values()[i] == x.values()[i]);
}

TEST_CASE("sigmoid of zero is one half") {
    CHECK(sigmoid(Tensor::scalar(0.0)).item() == 0.5);
}

TEST_CASE("logsumexp of two zeros is ln 2") {
    const Tensor t = Tensor::from(1, 2, {0.0, 0.0});
    CHECK(logsumexp(t).item() == Catch::Approx(std::log(2.0)).epsilon(1e-14));
}

TEST_CASE("logsumexp is overflow-safe for large inputs") {
    const Tensor t = Tensor::from(1, 3, {1e3, 0.0, -5.0});
    const double v = logsumexp(t).item();
    CHECK(std::isfinite(v));
    CHECK(v == Catch::Approx(1000.0).epsilon(1e-12));
}

TEST_CASE("shape mismatches raise structured errors naming the op") {
    const Tensor a = Tensor::zeros(2, 3);
    const Tensor b = Tensor::zeros(2, 3);
    CHECK_THROWS_MATCHES(matmul(a, b), ShapeError,
                         Catch::Matchers::MessageMatches(
                             Catch::Matchers::ContainsSubstring("matmul")));
    CHECK_THROWS_AS(add(a, Tensor::zeros(3, 2)), ShapeError);
    CHECK_THROWS_AS(concat({a, Tensor::zeros(2, 2)}, 0), ShapeError);
}

TEST_CASE("log of a non-positive value is a domain error") {
    CHECK_THROWS_AS(log(Tensor::scalar(0.0)), ValueError);
    CHECK_THROWS_AS(log(Tensor::scalar(-1.0)), ValueError);
}

TEST_CASE("backward of sum of squares gives 2x") {
    Tensor x = Tensor::from(1, 1, {3.0}, true);
    Tape tape;
    {
        TapeScope scope(tape);
        tape.backward(sum(mul(x, x)));
    }
    REQUIRE(x.has_grad());
    CHECK(x.grad()[0] == Catch::Approx(6.0));
}

TEST_CASE("backward of scaled sigmoid at zero gives a quarter of the constant") {
    Tensor w = Tensor::from(1, 1, {0.0}, true);
    Tape tape;
    {
        TapeScope scope(tape);
        tape.backward(scale(sigmoid(w), 3.0));
    }
    CHECK(w.grad()[0] == Catch::Approx(0.25 * 3.0).epsilon(1e-12));
}

TEST_CASE("backward requires a scalar loss and a fresh tape") {
    Tensor x = Tensor::from(1, 2, {1.0, 2.0}, true);
    Tape tape;
    {
        TapeScope scope(tape);
        const Tensor y = mul(x, x);
        CHECK_THROWS_AS(tape.backward(y), ValueError);
        const Tensor loss = sum(y);
        tape.backward(loss);
        CHECK_THROWS_AS(tape.backward(loss), ValueError);
        tape.reset();
    }
}

TEST_CASE("gradients of unreachable tensors stay untouched") {
    Tensor x = Tensor::from(1, 1, {2.0}, true);
    Tensor z = Tensor::from(1, 1, {5.0}, true);
    Tape tape;
    {
        TapeScope scope(tape);
        mul(z, z); // recorded but not reachable from the loss
        tape.backward(mul(x, x));
    }
    CHECK(x.grad()[0] == Catch::Approx(4.0));
    CHECK_FALSE(z.has_grad());
}

TEST_CASE("random three-layer composition matches finite differences") {
    Rng rng(42);
    for (int trial = 0; trial < 5; ++trial) {
        const Tensor x = testutil::random_tensor(rng, 2, 4, -1.5, 1.5, true);
        const Tensor w1 = testutil::random_tensor(rng, 4, 5, -1, 1, true);
        const Tensor w2 = testutil::random_tensor(rng, 5, 3, -1, 1, true);
        const Tensor w3 = testutil::random_tensor(rng, 3, 2, -1, 1, true);
        auto forward = [&] {
            const Tensor h1 = tanh(matmul(x, w1));
            const Tensor h2 = sigmoid(matmul(h1, w2));
            const Tensor h3 = matmul(h2, w3);
            return logsumexp(h3);
        };
        const auto report = testutil::fd_check({x, w1, w2, w3}, forward);
        INFO(report.worst);
        CHECK(report.pass);
    }
}

TEST_CASE("detach preserves values and severs the graph") {
    Rng rng(3);
    Tensor x = testutil::random_tensor(rng, 2, 2, -2, 2, true);
    const Tensor d = detach(x);
    CHECK(d.values() == x.values());
    CHECK_FALSE(d.requires_grad());

    SECTION("backward through a detached branch leaves no gradient") {
        Tape tape;
        {
            TapeScope scope(tape);
            tape.backward(sum(mul(detach(x), detach(x))));
        }
        CHECK_FALSE(x.has_grad());
    }

    SECTION("x + detach(x) has gradient one, not two") {
        Tape tape;
        {
            TapeScope scope(tape);
            tape.backward(sum(add(x, detach(x))));
        }
        for (double g : x.grad()) CHECK(g == 1.0);
    }
}

TEST_CASE("gradients accumulate additively across separate tapes") {
    Tensor x = Tensor::from(1, 1, {1.5}, true);
    for (int pass = 0; pass < 2; ++pass) {
        Tape tape;
        TapeScope scope(tape);
        tape.backward(mul(x, x));
    }
    CHECK(x.grad()[0] == Catch::Approx(2.0 * 1.5 * 2.0));
}

TEST_CASE("forward and backward are deterministic given identical inputs") {
    auto run = [] {
        Rng rng(77);
        Tensor x = testutil::random_tensor(rng, 3, 3, -2, 2, true);
        Tensor w = testutil::random_tensor(rng, 3, 3, -2, 2, true);
        Tape tape;
        Tensor loss;
        {
            TapeScope scope(tape);
            loss = logsumexp(matmul(softmax(x, 1), tanh(w)));
            tape.backward(loss);
        }
        std::vector<double> out{loss.item()};
        out.insert(out.end(), x.grad().begin(), x.grad().end());
        out.insert(out.end(), w.grad().begin(), w.grad().end());
        return out;
    };
    CHECK(run() == run());
}

TEST_CASE("embedding lookup gathers rows and scatters gradients") {
    Tensor table = Tensor::from(3, 2, {1, 2, 3, 4, 5, 6}, true);
    Tape tape;
    {
        TapeScope scope(tape);
        const Tensor picked = embedding_lookup(table, {2, 0, 2});
        CHECK(picked.values() == std::vector<double>{5, 6, 1, 2, 5, 6});
        tape.backward(sum(picked));
    }
    CHECK(table.grad() == std::vector<double>{1, 1, 0, 0, 2, 2});
    CHECK_THROWS_AS(embedding_lookup(table, {3}), ValueError);
}

TEST_CASE("per-op gradients match finite differences on random tensors") {
    Rng rng(2026);
    int cases = 0;
    for (int trial = 0; trial < 8; ++trial) {
        const int m = 1 + rng.uniform_int(5);
        const int n = 1 + rng.uniform_int(5);
        const Tensor a = testutil::random_tensor(rng, m, n);
        const Tensor b = testutil::random_tensor(rng, m, n);
        const Tensor c = testutil::random_tensor(rng, n, m);
        const Tensor row = testutil::random_tensor(rng, 1, n);
        const int axis = rng.uniform_int(3) - 1;
        const int concat_axis = rng.uniform_int(2);
        const int pick_row = rng.uniform_int(m);

        using Fwd = std::function<Tensor()>;
        const std::vector<std::pair<std::vector<Tensor>, Fwd>> ops = {
            {{a, c}, [&] { return sum(matmul(a, c)); }},
            {{a}, [&] { return sum(transpose(a)); }},
            {{a, b}, [&] { return logsumexp(add(a, b)); }},
            {{a, b}, [&] { return logsumexp(sub(a, b)); }},
            {{a, b}, [&] { return sum(mul(a, b)); }},
            {{a, row}, [&] { return logsumexp(add_rowvec(a, row)); }},
            {{a}, [&] { return sum(scale(a, -1.7)); }},
            {{a}, [&] { return sum(relu(a)); }},
            {{a}, [&] { return sum(leaky_relu(a, 0.2)); }},
            {{a}, [&] { return sum(sigmoid(a)); }},
            {{a}, [&] { return sum(tanh(a)); }},
            {{a}, [&] { return sum(exp(scale(a, 0.5))); }},
            {{a}, [&] { return sum(log(add(mul(a, a), Tensor::constant(m, n, 0.5)))); }},
            {{a}, [&] { return sum(mul(sum(a, axis), sum(a, axis))); }},
            {{a}, [&] { return sum(mul(mean(a, axis), mean(a, axis))); }},
            {{a}, [&] { return sum(logsumexp(a, axis)); }},
            {{a}, [&] { return sum(mul(softmax(a, 1), softmax(a, 1))); }},
            {{a}, [&] { return sum(mul(softmax(a, 0), softmax(a, 0))); }},
            {{a, b}, [&] { return logsumexp(concat({a, b}, concat_axis)); }},
            {{a}, [&] { return sum(take_row(a, pick_row)); }},
            {{a, row}, [&] { return logsumexp(replace_row(a, pick_row, row)); }},
            {{a}, [&] { return sum(mul(reshape(a, n, m), reshape(a, n, m))); }},
            {{a}, [&] { return sum(clamp(a, -1.0, 1.0)); }},
            {{a}, [&] { return sum(embedding_lookup(a, {0, m - 1, 0})); }},
        };
        for (const auto& [params, fwd] : ops) {
            const auto report = testutil::fd_check(params, fwd);
            INFO("trial " << trial << " " << report.worst);
            CHECK(report.pass);
            ++cases;
        }
    }
    CHECK(cases >= 100);
}

TEST_CASE("values and gradients stay finite through a mixed graph") {
    Rng rng(5);
    Tensor x = testutil::random_tensor(rng, 4, 4, -2, 2, true);
    Tape tape;
    Tensor loss;
    {
        TapeScope scope(tape);
        loss = logsumexp(matmul(softmax(x, 1), sigmoid(x)));
        tape.backward(loss);
    }
    CHECK(testutil::all_finite(loss.values()));
    CHECK(testutil::all_finite(x.grad()));
}
