#include <doctest.h>

#include <cmath>

#include "helpers.hpp"
#include "sabr/autodiff.hpp"
#include "sabr/box.hpp"
#include "sabr/ops.hpp"

using namespace sabr;
using test::rel_error;

namespace {

// Sample points inside the input box, run the exact forward, and check
// every layer activation lies inside its propagated box.
template <typename T>
bool sound_on_samples(const Network<T>& net, const BoxTensor<T>& in, int samples, double slack, Rng& rng) {
    const BoxTrace<T> tr = propagate_box(net, in, T(1));
    for (int s = 0; s < samples; ++s) {
        Tensor<T> x(in.centre.shape());
        for (size_t i = 0; i < x.size(); ++i) {
            const double c = static_cast<double>(in.centre[i]);
            const double r = static_cast<double>(in.radius[i]);
            x[i] = static_cast<T>(rng.uniform(c - r, c + r));
        }
        const std::vector<Tensor<T>> acts = forward_trace(net, x);
        for (size_t li = 0; li < acts.size(); ++li) {
            const BoxTensor<T>& b = tr.boxes[li];
            for (size_t i = 0; i < acts[li].size(); ++i) {
                const double v = static_cast<double>(acts[li][i]);
                const double lo = static_cast<double>(b.centre[i]) - static_cast<double>(b.radius[i]);
                const double hi = static_cast<double>(b.centre[i]) + static_cast<double>(b.radius[i]);
                if (v < lo - slack || v > hi + slack) return false;
            }
        }
    }
    return true;
}

}  // namespace

TEST_SUITE("box") {

TEST_CASE("box_linear identity, worked 2x2 example, bias shift") {
    // identity
    Tensor<double> eye({2, 2}, {1, 0, 0, 1});
    BoxTensor<double> in = make_box(Tensor<double>({2}, {0.3, -0.2}), Tensor<double>({2}, {0.1, 0.4}));
    BoxTensor<double> out = box_linear(eye, static_cast<const Tensor<double>*>(nullptr), in);
    CHECK(out.centre[0] == 0.3);
    CHECK(out.radius[1] == 0.4);

    // paper-convention W = [[1,-1],[2,0]] stored as [in,out] transpose
    Tensor<double> w({2, 2}, {1, 2, -1, 0});
    BoxTensor<double> in2 = make_box(Tensor<double>({2}, {0, 0}), Tensor<double>({2}, {1, 1}));
    BoxTensor<double> out2 = box_linear(w, static_cast<const Tensor<double>*>(nullptr), in2);
    CHECK(out2.centre[0] == 0.0);
    CHECK(out2.centre[1] == 0.0);
    CHECK(out2.radius[0] == 2.0);
    CHECK(out2.radius[1] == 2.0);

    // corner-enumeration oracle: 4 corners of the input box
    double lo0 = 1e9, hi0 = -1e9, lo1 = 1e9, hi1 = -1e9;
    for (int cx = 0; cx < 2; ++cx)
        for (int cy = 0; cy < 2; ++cy) {
            const double x0 = cx ? 1.0 : -1.0, x1 = cy ? 1.0 : -1.0;
            const double y0 = 1 * x0 + (-1) * x1;  // row 1 of paper W
            const double y1 = 2 * x0 + 0 * x1;     // row 2
            lo0 = std::min(lo0, y0);
            hi0 = std::max(hi0, y0);
            lo1 = std::min(lo1, y1);
            hi1 = std::max(hi1, y1);
        }
    CHECK(out2.centre[0] - out2.radius[0] == doctest::Approx(lo0));
    CHECK(out2.centre[0] + out2.radius[0] == doctest::Approx(hi0));
    CHECK(out2.centre[1] - out2.radius[1] == doctest::Approx(lo1));
    CHECK(out2.centre[1] + out2.radius[1] == doctest::Approx(hi1));

    // bias shifts the centre only
    Tensor<double> bias({2}, {5, -3});
    BoxTensor<double> out3 = box_linear(eye, &bias, in);
    CHECK(out3.centre[0] == doctest::Approx(5.3));
    CHECK(out3.radius[0] == 0.1);
}

TEST_CASE("box_conv2d positive kernel, negative kernel, containment") {
    // all-ones 2x2 kernel: output radius = r * window size
    Tensor<double> k = Tensor<double>::full({1, 1, 2, 2}, 1.0);
    BoxTensor<double> in =
        make_box(Tensor<double>::full({1, 3, 3}, 0.5), Tensor<double>::full({1, 3, 3}, 0.25));
    BoxTensor<double> out = box_conv2d(k, static_cast<const Tensor<double>*>(nullptr), 1, 0, in);
    for (size_t i = 0; i < out.radius.size(); ++i) CHECK(out.radius[i] == doctest::Approx(1.0));

    // kernel [-3]: radius scales by 3
    Tensor<double> kn({1, 1, 1, 1}, {-3.0});
    BoxTensor<double> outn = box_conv2d(kn, static_cast<const Tensor<double>*>(nullptr), 1, 0, in);
    for (size_t i = 0; i < outn.radius.size(); ++i) CHECK(outn.radius[i] == doctest::Approx(0.75));

    // random instance: sampled containment
    Rng rng(404);
    const Tensor<double> kr = test::random_tensor<double>({2, 1, 3, 3}, rng);
    const Tensor<double> br = test::random_tensor<double>({2}, rng);
    BoxTensor<double> rin = make_box(test::random_tensor<double>({1, 5, 5}, rng),
                                     test::random_tensor<double>({1, 5, 5}, rng, 0.0, 0.3));
    const BoxTensor<double> rout = box_conv2d(kr, &br, 2, 1, rin);
    for (int s = 0; s < 1000; ++s) {
        Tensor<double> x(rin.centre.shape());
        for (size_t i = 0; i < x.size(); ++i)
            x[i] = rng.uniform(rin.centre[i] - rin.radius[i], rin.centre[i] + rin.radius[i]);
        const Tensor<double> y = ops::conv2d(x, kr, &br, 2, 1);
        for (size_t i = 0; i < y.size(); ++i) {
            CHECK(y[i] >= rout.centre[i] - rout.radius[i] - 1e-9);
            CHECK(y[i] <= rout.centre[i] + rout.radius[i] + 1e-9);
        }
    }
}

TEST_CASE("box_relu worked examples") {
    auto one = [](double c, double r, double cs) {
        BoxTensor<double> in = make_box(Tensor<double>({1}, {c}), Tensor<double>({1}, {r}));
        return box_relu(in, cs);
    };
    const auto inactive = one(-1, 0.5, 1.0);
    CHECK(inactive.centre[0] == 0.0);
    CHECK(inactive.radius[0] == 0.0);

    const auto active = one(1, 0.5, 1.0);
    CHECK(active.centre[0] == 1.0);
    CHECK(active.radius[0] == 0.5);

    const auto unstable = one(0.5, 1.0, 1.0);
    CHECK(unstable.centre[0] == doctest::Approx(0.75));
    CHECK(unstable.radius[0] == doctest::Approx(0.75));

    const auto shrunk = one(0.5, 1.0, 0.8);
    CHECK(shrunk.centre[0] == doctest::Approx(0.6));
    CHECK(shrunk.radius[0] == doctest::Approx(0.6));

    CHECK_THROWS(one(0, 1, 0.0));
    CHECK_THROWS(one(0, 1, 1.5));
}

TEST_CASE("box_bn_affine identity, negative gamma, containment") {
    Tensor<double> gamma = Tensor<double>::full({1}, 1.0);
    Tensor<double> beta({1});
    Tensor<double> mean({1});
    Tensor<double> var = Tensor<double>::full({1}, 1.0 - kBnVarFloor);
    BoxTensor<double> in = make_box(Tensor<double>({1}, {0.4}), Tensor<double>({1}, {0.2}));
    const auto id = box_bn_affine(gamma, beta, mean, var, in);
    CHECK(id.centre[0] == doctest::Approx(0.4));
    CHECK(id.radius[0] == doctest::Approx(0.2));

    Tensor<double> g2 = Tensor<double>::full({1}, -2.0);
    const auto neg = box_bn_affine(g2, beta, mean, var, in);
    CHECK(neg.radius[0] == doctest::Approx(0.4));

    Rng rng(606);
    Tensor<double> rg({3}), rb({3}), rm({3}), rv({3});
    for (int c = 0; c < 3; ++c) {
        rg[static_cast<size_t>(c)] = rng.uniform(-2, 2);
        rb[static_cast<size_t>(c)] = rng.uniform(-1, 1);
        rm[static_cast<size_t>(c)] = rng.uniform(-1, 1);
        rv[static_cast<size_t>(c)] = rng.uniform(0.1, 2.0);
    }
    BoxTensor<double> rin = make_box(test::random_tensor<double>({3, 4, 4}, rng),
                                     test::random_tensor<double>({3, 4, 4}, rng, 0.0, 0.5));
    const auto rout = box_bn_affine(rg, rb, rm, rv, rin);
    for (int s = 0; s < 1000; ++s) {
        Tensor<double> x(rin.centre.shape());
        for (size_t i = 0; i < x.size(); ++i)
            x[i] = rng.uniform(rin.centre[i] - rin.radius[i], rin.centre[i] + rin.radius[i]);
        for (size_t i = 0; i < x.size(); ++i) {
            const int c = static_cast<int>(i / 16);
            const double a = rg[static_cast<size_t>(c)] / std::sqrt(rv[static_cast<size_t>(c)] + kBnVarFloor);
            const double y = a * (x[i] - rm[static_cast<size_t>(c)]) + rb[static_cast<size_t>(c)];
            CHECK(y >= rout.centre[i] - rout.radius[i] - 1e-9);
            CHECK(y <= rout.centre[i] + rout.radius[i] + 1e-9);
        }
    }
}

TEST_CASE("propagate_box: point collapse equals forward bit-for-bit") {
    Rng rng(808);
    for (int iter = 0; iter < 10; ++iter) {
        const Network<double> net = test::random_net<double>(rng);
        const Tensor<double> x = test::random_tensor<double>(net.input_shape, rng, 0, 1);
        const BoxTrace<double> tr = propagate_box(net, point_box(x), 1.0);
        const Tensor<double> y = forward(net, x);
        for (size_t i = 0; i < y.size(); ++i) {
            CHECK(tr.out().centre[i] == y[i]);
            CHECK(tr.out().radius[i] == 0.0);
        }
    }
}

TEST_CASE("propagate_box matches a manual two-layer interval computation") {
    Network<double> net = make_mlp<double>({2, 2, 2});
    auto& l0 = net.layers[0];
    l0.weight = Tensor<double>({2, 2}, {1, 2, -1, 0});
    l0.bias = Tensor<double>({2}, {0.5, -0.5});
    auto& l2 = net.layers[2];
    l2.weight = Tensor<double>({2, 2}, {1, 0, 1, 1});
    l2.bias = Tensor<double>({2});
    net.refresh_cache();

    const BoxTensor<double> in = make_box(Tensor<double>({2}, {0.2, -0.1}), Tensor<double>({2}, {0.3, 0.2}));
    const BoxTrace<double> tr = propagate_box(net, in, 1.0);

    // layer 0 by hand: c = x@W+b, r = |x|@|W|
    const double c0 = 0.2 * 1 + (-0.1) * -1 + 0.5;   // 0.8
    const double r0 = 0.3 * 1 + 0.2 * 1;             // 0.5
    const double c1 = 0.2 * 2 + (-0.1) * 0 + (-0.5); // -0.1
    const double r1 = 0.3 * 2 + 0.2 * 0;             // 0.6
    CHECK(tr.boxes[0].centre[0] == doctest::Approx(c0));
    CHECK(tr.boxes[0].radius[0] == doctest::Approx(r0));
    CHECK(tr.boxes[0].centre[1] == doctest::Approx(c1));
    CHECK(tr.boxes[0].radius[1] == doctest::Approx(r1));

    // relu by hand: unit 0 unstable? l = 0.3 > 0 stable active; unit 1: l=-0.7,u=0.5 unstable
    const double u1 = -0.1 + 0.6;
    const double rc1 = 0.5 * u1, rr1 = 0.5 * u1;
    CHECK(tr.boxes[1].centre[0] == doctest::Approx(0.8));
    CHECK(tr.boxes[1].radius[0] == doctest::Approx(0.5));
    CHECK(tr.boxes[1].centre[1] == doctest::Approx(rc1));
    CHECK(tr.boxes[1].radius[1] == doctest::Approx(rr1));

    // output layer by hand
    const double oc0 = 0.8 * 1 + rc1 * 1;
    const double orr0 = 0.5 * 1 + rr1 * 1;
    CHECK(tr.boxes[2].centre[0] == doctest::Approx(oc0));
    CHECK(tr.boxes[2].radius[0] == doctest::Approx(orr0));
}

TEST_CASE("soundness on random nets with sampled points") {
    Rng rng(909);
    for (int iter = 0; iter < 10; ++iter) {
        const Network<double> net = test::random_net<double>(rng);
        const Tensor<double> centre = test::random_tensor<double>(net.input_shape, rng, 0.2, 0.8);
        const Tensor<double> radius = test::random_tensor<double>(net.input_shape, rng, 0.0, 0.15);
        CHECK(sound_on_samples(net, make_box(centre, radius), 1000, 1e-6, rng));
    }
}

TEST_CASE("cs < 1 shrinks unstable radii (deliberately unsound)") {
    Rng rng(111);
    for (int iter = 0; iter < 5; ++iter) {
        const Network<double> net = test::random_net<double>(rng);
        const BoxTensor<double> in = make_box(test::random_tensor<double>(net.input_shape, rng, 0.2, 0.8),
                                              Tensor<double>::full(net.input_shape, 0.1));
        const BoxTrace<double> t1 = propagate_box(net, in, 1.0);
        const BoxTrace<double> t08 = propagate_box(net, in, 0.8);
        for (size_t li = 0; li < t1.boxes.size(); ++li)
            for (size_t i = 0; i < t1.boxes[li].radius.size(); ++i)
                CHECK(t08.boxes[li].radius[i] <= t1.boxes[li].radius[i] + 1e-12);
    }
}

TEST_CASE("monotonicity: larger input radius never shrinks output radii") {
    Rng rng(222);
    for (int iter = 0; iter < 8; ++iter) {
        const Network<double> net = test::random_net<double>(rng);
        const Tensor<double> centre = test::random_tensor<double>(net.input_shape, rng, 0.2, 0.8);
        Tensor<double> r1 = test::random_tensor<double>(net.input_shape, rng, 0.0, 0.1);
        Tensor<double> r2 = r1.clone();
        for (size_t i = 0; i < r2.size(); ++i) r2[i] += rng.uniform(0.0, 0.1);
        const BoxTrace<double> t1 = propagate_box(net, make_box(centre, r1), 1.0);
        const BoxTrace<double> t2 = propagate_box(net, make_box(centre, r2), 1.0);
        for (size_t li = 0; li < t1.boxes.size(); ++li)
            for (size_t i = 0; i < t1.boxes[li].radius.size(); ++i)
                CHECK(t2.boxes[li].radius[i] >= t1.boxes[li].radius[i] - 1e-12);
    }
}

TEST_CASE("logit_diff_upper worked examples") {
    // point case: radius 0, logits (3,1), t=0 -> (0, -2)
    BoxTensor<double> pt = make_box(Tensor<double>({2}, {3, 1}), Tensor<double>({2}));
    const Tensor<double> u0 = logit_diff_upper(pt, 0);
    CHECK(u0[0] == 0.0);
    CHECK(u0[1] == -2.0);

    // centre (0,0), radius (1,1), t=0 -> u_1 = 2
    BoxTensor<double> b1 = make_box(Tensor<double>({2}), Tensor<double>({2}, {1, 1}));
    const Tensor<double> u1 = logit_diff_upper(b1, 0);
    CHECK(u1[0] == 0.0);
    CHECK(u1[1] == 2.0);

    // certified case: centre (5,0), radius (1,1), t=0 -> -3 < 0
    BoxTensor<double> b2 = make_box(Tensor<double>({2}, {5, 0}), Tensor<double>({2}, {1, 1}));
    const Tensor<double> u2 = logit_diff_upper(b2, 0);
    CHECK(u2[1] == -3.0);
    CHECK(worst_margin(u2, 0) == -3.0);

    // zero radius reduces to exact logit differences
    Rng rng(33);
    const Tensor<double> logits = test::random_tensor<double>({5}, rng);
    const Tensor<double> ud = logit_diff_upper(point_box(logits), 2);
    for (size_t i = 0; i < 5; ++i) CHECK(ud[i] == logits[i] - logits[2]);
}

TEST_CASE("box gradients through propagate_box match finite differences") {
    Rng rng(555);
    int done = 0;
    while (done < 5) {
        Network<double> net = test::random_net<double>(rng, false);
        const Tensor<double> centre = test::random_tensor<double>(net.input_shape, rng, 0.2, 0.8);
        const Tensor<double> radius = Tensor<double>::full(net.input_shape, 0.05);
        if (test::relu_boundary_margin(net, make_box(centre, radius)) < 1e-3) continue;
        ++done;

        // autodiff gradient of sum(centre)+sum(radius) of the output box
        Tape<double> tape;
        TapeNet<double> tnet(tape, net, true);
        const Val vc = tape.leaf(centre, false);
        const Val vr = tape.leaf(radius, false);
        auto [oc, orr] = tnet.forward_box(vc, vr, 1.0);
        const Val loss = tape.add(tape.sum(oc), tape.sum(orr));
        tape.backward(loss);
        std::vector<Tensor<double>> grads = make_grad_buffers(net);
        tnet.add_param_grads(grads);

        std::vector<double> dir(test::flat_param_count(net));
        for (auto& d : dir) d = rng.normal();
        const double analytic = test::flat_dot(grads, dir);
        const double fd = test::central_diff<double>(net, dir, 1e-5, [&](const Network<double>& n) {
            const BoxTrace<double> tr = propagate_box(n, make_box(centre, radius), 1.0);
            double s = 0;
            for (size_t i = 0; i < tr.out().centre.size(); ++i) s += tr.out().centre[i] + tr.out().radius[i];
            return s;
        });
        CHECK(rel_error(analytic, fd) < 1e-5);
    }
}

}  // TEST_SUITE
