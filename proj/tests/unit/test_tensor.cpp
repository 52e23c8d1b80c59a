#include <doctest.h>

#include "superdec/gradcheck.hpp"
#include "superdec/ops.hpp"
#include "superdec/optim.hpp"

using namespace superdec;

TEST_CASE("tensor basics and invariants") {
    TensorF t = TensorF::zeros(Shape4{2, 3, 4, 5});
    CHECK(t.numel() == 120);
    CHECK(t.shape().str() == "[2,3,4,5]");
    CHECK_THROWS_AS(TensorF::from_data(Shape4{1, 1, 2, 2}, std::vector<float>{1.f, 2.f}),
                    ShapeError);
    CHECK(TensorF::scalar(3.5f).item() == doctest::Approx(3.5));
    CHECK_THROWS_AS(t.item(), ShapeError);

    // copies share the node; detach gives an independent leaf
    TensorF u = t;
    u.values_mut()[0] = 7.f;
    CHECK(t.values()[0] == 7.f);
    TensorF d = t.detach();
    d.values_mut()[0] = 9.f;
    CHECK(t.values()[0] == 7.f);
}

TEST_CASE("backward populates leaf gradients") {
    // loss = sum(w .* x) with fixed x  =>  grad(w) = x
    Rng rng(3);
    TensorD x = TensorD::uniform(Shape4{1, 2, 3, 3}, rng, -1.0, 1.0);
    TensorD w = TensorD::uniform(Shape4{1, 2, 3, 3}, rng, -1.0, 1.0);
    w.set_requires_grad(true);
    backward(sum_all(mul(w, x)));
    auto g = w.grad();
    for (std::int64_t i = 0; i < x.numel(); ++i)
        CHECK(g[i] == doctest::Approx(x.values()[i]).epsilon(1e-12));

    // relu kills gradient on an all-negative input
    TensorD neg = TensorD::full(Shape4{1, 1, 2, 2}, -2.0);
    neg.set_requires_grad(true);
    backward(sum_all(relu(neg)));
    for (const double v : neg.grad()) CHECK(v == 0.0);
}

TEST_CASE("backward error contracts") {
    TensorD x = TensorD::full(Shape4{1, 1, 2, 2}, 1.0);
    x.set_requires_grad(true);

    TensorD y = mul(x, x);
    CHECK_THROWS_AS(backward(y), GraphError);  // non-scalar loss

    TensorD loss = sum_all(y);
    backward(loss);
    CHECK_THROWS_AS(backward(loss), GraphError);  // double backward on same root

    // reusing a consumed interior node in a new graph is an error, not a
    // silently wrong gradient
    CHECK_THROWS_AS(backward(mean_all(y)), GraphError);
}

TEST_CASE("gradient accumulates across separate graphs") {
    TensorD x = TensorD::full(Shape4{1, 1, 1, 1}, 2.0);
    x.set_requires_grad(true);
    backward(sum_all(mul(x, TensorD::scalar(3.0))));
    backward(sum_all(mul(x, TensorD::scalar(5.0))));
    CHECK(x.grad()[0] == doctest::Approx(8.0));
    x.zero_grad();
    CHECK(x.grad()[0] == 0.0);
}

TEST_CASE("grad_check is exact for linear and tight for smooth maps") {
    Rng rng(11);
    TensorD x = TensorD::uniform(Shape4{1, 1, 3, 3}, rng, -1.0, 1.0);
    TensorD a = TensorD::uniform(Shape4{1, 1, 3, 3}, rng, -1.0, 1.0);

    const double lin_err = grad_check<double>(
        [&](const TensorD& t) { return sum_all(mul(t, a)); }, x, 1e-4);
    CHECK(lin_err <= 1e-10);

    const double sig_err = grad_check<double>(
        [](const TensorD& t) { return sum_all(sigmoid(t)); }, x, 1e-5);
    CHECK(sig_err <= 1e-7);

    CHECK_THROWS_AS(grad_check<double>([](const TensorD&) { return TensorD::scalar(0.0); }, x, 0.0),
                    ValueError);
}

namespace {

// test fixture: forward doubles, backward deliberately claims a factor 3
TensorD wrong_gradient_double(const TensorD& x) {
    auto n = std::make_shared<superdec::detail::Node<double>>();
    n->shape = x.shape();
    n->value.resize(static_cast<std::size_t>(x.numel()));
    for (std::int64_t i = 0; i < x.numel(); ++i) n->value[i] = 2.0 * x.values()[i];
    if (x.requires_grad()) {
        auto xn = x.node();
        n->requires_grad = true;
        n->parents.push_back(xn);
        n->backward_fn = [xn](superdec::detail::Node<double>& self) {
            xn->ensure_grad();
            for (std::size_t i = 0; i < self.grad.size(); ++i) xn->grad[i] += 3.0 * self.grad[i];
        };
    }
    return TensorD(n);
}

} // namespace

TEST_CASE("grad_check flags a wrong gradient (negative control)") {
    Rng rng(5);
    TensorD x = TensorD::uniform(Shape4{1, 1, 2, 2}, rng, 0.5, 1.0);
    const double err = grad_check<double>(
        [](const TensorD& t) { return sum_all(wrong_gradient_double(t)); }, x, 1e-5);
    CHECK(err > 1e-2);
}

TEST_CASE("adam: zero gradient leaves parameters unchanged") {
    Rng rng(7);
    std::vector<Parameter<double>> params;
    TensorD v = TensorD::uniform(Shape4{1, 1, 2, 2}, rng, -1.0, 1.0);
    v.set_requires_grad(true);
    v.zero_grad();
    params.push_back({"p", v});
    const std::vector<double> before(v.values().begin(), v.values().end());

    AdamState<double> state;
    adam_step(params, state, AdamConfig{});
    for (std::int64_t i = 0; i < v.numel(); ++i) CHECK(v.values()[i] == before[i]);
}

TEST_CASE("adam: first step from zero state is -lr*g/(|g|+eps)") {
    Rng rng(9);
    std::vector<Parameter<double>> params;
    TensorD v = TensorD::zeros(Shape4{1, 1, 2, 3});
    v.set_requires_grad(true);
    v.zero_grad();
    params.push_back({"p", v});

    std::vector<double> g(6);
    for (auto& gi : g) gi = rng.uniform(-2.0, 2.0);
    for (std::size_t i = 0; i < g.size(); ++i) params[0].value.node()->grad[i] = g[i];

    const AdamConfig cfg{1e-3, 0.9, 0.999, 1e-8};
    AdamState<double> state;
    adam_step(params, state, cfg);
    for (std::size_t i = 0; i < g.size(); ++i) {
        const double expected = -cfg.lr * g[i] / (std::abs(g[i]) + cfg.eps);
        CHECK(v.values()[i] == doctest::Approx(expected).epsilon(1e-9));
    }
}

TEST_CASE("adam: constant gradient drives |step| toward lr") {
    std::vector<Parameter<double>> params;
    TensorD v = TensorD::zeros(Shape4{1, 1, 1, 1});
    v.set_requires_grad(true);
    params.push_back({"p", v});

    const AdamConfig cfg{1e-3, 0.9, 0.999, 1e-8};
    AdamState<double> state;
    double prev = 0;
    double step_size = 0;
    for (int k = 0; k < 500; ++k) {
        params[0].value.zero_grad();
        params[0].value.node()->grad[0] = 0.37;  // constant gradient
        adam_step(params, state, cfg);
        step_size = std::abs(v.values()[0] - prev);
        prev = v.values()[0];
    }
    CHECK(step_size == doctest::Approx(cfg.lr).epsilon(0.01));
}

TEST_CASE("adam: state size mismatch is an error") {
    std::vector<Parameter<double>> params;
    TensorD v = TensorD::zeros(Shape4{1, 1, 1, 1});
    v.set_requires_grad(true);
    params.push_back({"p", v});
    AdamState<double> state;
    adam_step(params, state, AdamConfig{});
    TensorD w = TensorD::zeros(Shape4{1, 1, 1, 1});
    w.set_requires_grad(true);
    params.push_back({"q", w});
    CHECK_THROWS_AS(adam_step(params, state, AdamConfig{}), ShapeError);
}
