#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "oracles.hpp"
#include "tvpr/nn.hpp"
#include "tvpr/rng.hpp"
#include "tvpr/tensor.hpp"

using namespace tvpr;

TEST_CASE("tensor invariants") {
    CHECK_THROWS_AS(Tensorf({2, 2}, {1.f, 2.f, 3.f}), ShapeError);
    CHECK_THROWS_AS(Tensorf({0, 3}), ShapeError);
    CHECK_THROWS_AS(Tensorf({1, 2, 3, 4, 5}), ShapeError);
    Tensorf t({2, 3});
    CHECK(t.size() == 6);
    t.at(1, 2) = 5.f;
    CHECK(t.matrix()(1, 2) == 5.f);
}

TEST_CASE("rng determinism and range") {
    Rng a(42), b(42), c(43);
    for (int i = 0; i < 100; ++i) {
        CHECK(a.next_u64() == b.next_u64());
    }
    CHECK(a.next_u64() != c.next_u64());
    Rng d(7);
    for (int i = 0; i < 1000; ++i) {
        const double u = d.next_double();
        CHECK(u >= 0.0);
        CHECK(u < 1.0);
        CHECK(d.bounded(10) < 10);
    }
}

TEST_CASE("conv2d identity kernel") {
    Tensorf in({2, 2, 1}, {1, 2, 3, 4});
    Tensorf k({3, 3, 1, 1});
    k.at(1, 1, 0, 0) = 1.f; // delta at center
    VecXf bias = VecXf::Zero(1);
    Tensorf out = conv2d(in, k, bias);
    for (Index i = 0; i < 4; ++i) CHECK(out[i] == in[i]);
}

TEST_CASE("conv2d zero input gives bias") {
    Rng rng(1);
    Tensorf in({4, 5, 2});
    Tensorf k = oracle::random_tensor(rng, {3, 3, 2, 3});
    VecXf bias(3);
    bias << 0.5f, -1.f, 2.f;
    Tensorf out = conv2d(in, k, bias);
    for (Index y = 0; y < 4; ++y)
        for (Index x = 0; x < 5; ++x)
            for (Index c = 0; c < 3; ++c) CHECK(out.at(y, x, c) == bias[c]);
}

TEST_CASE("conv2d matches 6-loop oracle") {
    Rng rng(2);
    Tensorf in = oracle::random_tensor(rng, {5, 5, 2});
    Tensorf k = oracle::random_tensor(rng, {3, 3, 2, 3});
    VecXf bias = oracle::random_vector(rng, 3);
    Tensorf got = conv2d(in, k, bias);
    std::vector<double> b64(bias.data(), bias.data() + 3);
    Tensord want = oracle::conv2d(in, k, b64);
    CHECK(oracle::rel_error(got.vec(), want.vec()) <= 1e-5);
}

TEST_CASE("conv2d oracle property over 100 random cases") {
    Rng rng(3);
    for (int t = 0; t < 100; ++t) {
        const Index h = 1 + static_cast<Index>(rng.bounded(6));
        const Index w = 1 + static_cast<Index>(rng.bounded(6));
        const Index cin = 1 + static_cast<Index>(rng.bounded(4));
        const Index cout = 1 + static_cast<Index>(rng.bounded(4));
        Tensorf in = oracle::random_tensor(rng, {h, w, cin});
        Tensorf k = oracle::random_tensor(rng, {3, 3, cin, cout});
        VecXf bias = oracle::random_vector(rng, cout);
        Tensorf got = conv2d(in, k, bias);
        std::vector<double> b64(bias.data(), bias.data() + cout);
        Tensord want = oracle::conv2d(in, k, b64);
        CHECK(oracle::rel_error(got.vec(), want.vec()) <= 1e-5);
    }
}

TEST_CASE("conv2d channel mismatch") {
    Tensorf in({2, 2, 2});
    Tensorf k({3, 3, 3, 1});
    CHECK_THROWS_AS(conv2d(in, k, VecXf()), ShapeError);
}

TEST_CASE("maxpool2 basics") {
    Tensorf in({2, 2, 1}, {1, 2, 3, 4});
    Tensorf out = maxpool2(in);
    CHECK(out.size() == 1);
    CHECK(out[0] == 4.f);

    Tensorf c({4, 4, 2});
    c.vec().setConstant(2.5f);
    Tensorf cp = maxpool2(c);
    for (Index i = 0; i < cp.size(); ++i) CHECK(cp[i] == 2.5f);

    CHECK_THROWS_AS(maxpool2(Tensorf({3, 4, 1})), ShapeError);
}

TEST_CASE("maxpool2 matches window-scan oracle exactly") {
    Rng rng(4);
    Tensorf in = oracle::random_tensor(rng, {8, 8, 3});
    Tensorf got = maxpool2(in);
    Tensorf want = oracle::maxpool2(in);
    for (Index i = 0; i < got.size(); ++i) CHECK(got[i] == want[i]);
}

TEST_CASE("batchnorm_infer basics") {
    Tensorf in({1, 1, 1}, {5.f});
    VecXf mean(1), var(1), gamma(1), beta(1);

    mean << 0.f; var << 1.f; gamma << 1.f; beta << 0.f;
    CHECK(batchnorm_infer(in, mean, var, gamma, beta, 0.f)[0] == 5.f);

    mean << 5.f; var << 4.f; gamma << 2.f; beta << 1.f;
    CHECK(batchnorm_infer(in, mean, var, gamma, beta, 0.f)[0] == doctest::Approx(1.f));

    var << -1.f;
    CHECK_THROWS_AS(batchnorm_infer(in, mean, var, gamma, beta, 0.f), ValidationError);
}

TEST_CASE("batchnorm_infer matches direct formula") {
    Rng rng(5);
    Tensorf in = oracle::random_tensor(rng, {4, 6, 3});
    VecXf mean = oracle::random_vector(rng, 3);
    VecXf var = oracle::random_vector(rng, 3).cwiseAbs();
    VecXf gamma = oracle::random_vector(rng, 3);
    VecXf beta = oracle::random_vector(rng, 3);
    Tensorf got = batchnorm_infer(in, mean, var, gamma, beta, 1e-5f);
    Tensord want = oracle::batchnorm(in, mean, var, gamma, beta, 1e-5);
    CHECK(oracle::rel_error(got.vec(), want.vec()) <= 1e-6);
}

TEST_CASE("relu") {
    Tensorf in({3, 1}, {-1.f, 0.f, 2.f});
    Tensorf out = relu(in);
    CHECK(out[0] == 0.f);
    CHECK(out[1] == 0.f);
    CHECK(out[2] == 2.f);

    Rng rng(6);
    Tensorf r = oracle::random_tensor(rng, {4, 4, 2});
    Tensorf nn = relu(r);
    Tensorf nn2 = relu(nn);
    for (Index i = 0; i < nn.size(); ++i) CHECK(nn[i] == nn2[i]); // idempotent
    Tensorf pos = oracle::random_tensor(rng, {3, 3, 1});
    pos.vec() = pos.vec().cwiseAbs();
    Tensorf pr = relu(pos);
    for (Index i = 0; i < pos.size(); ++i) CHECK(pr[i] == pos[i]);
}

TEST_CASE("linear basics") {
    MatXf x(1, 2);
    x << 1.f, 2.f;
    MatXf w(2, 1);
    w << 1.f, 1.f;
    CHECK(linear(x, w, VecXf())(0, 0) == 3.f);

    MatXf id = MatXf::Identity(4, 4);
    Rng rng(7);
    MatXf r = oracle::random_matrix(rng, 3, 4);
    MatXf out = linear(r, id, VecXf::Zero(4));
    CHECK((out - r).cwiseAbs().maxCoeff() == 0.f);

    CHECK_THROWS_AS(linear(r, MatXf::Identity(5, 5), VecXf()), ShapeError);
}

TEST_CASE("linear matches triple-loop oracle over 100 cases") {
    Rng rng(8);
    for (int t = 0; t < 100; ++t) {
        const Index n = 1 + static_cast<Index>(rng.bounded(8));
        const Index din = 1 + static_cast<Index>(rng.bounded(12));
        const Index dout = 1 + static_cast<Index>(rng.bounded(12));
        MatXf x = oracle::random_matrix(rng, n, din);
        MatXf w = oracle::random_matrix(rng, din, dout);
        VecXf b = oracle::random_vector(rng, dout);
        MatXf got = linear(x, w, b);
        MatXd want = oracle::linear(x, w, b);
        CHECK(oracle::rel_error(got.reshaped(), want.reshaped()) <= 1e-5);
    }
}

TEST_CASE("softmax basics and identities") {
    VecXf two(2);
    two << 0.f, 0.f;
    VecXf s = softmax(two);
    CHECK(s[0] == doctest::Approx(0.5));
    CHECK(s[1] == doctest::Approx(0.5));

    two << 0.f, std::log(3.f);
    s = softmax(two);
    CHECK(s[0] == doctest::Approx(0.25));
    CHECK(s[1] == doctest::Approx(0.75));

    Rng rng(9);
    VecXf v = oracle::random_vector(rng, 10);
    VecXf shifted = v.array() + 3.7f;
    CHECK((softmax(v) - softmax(shifted)).cwiseAbs().maxCoeff() <= 1e-6f);

    VecXf bad(2);
    bad << 1.f, std::nanf("");
    CHECK_THROWS_AS(softmax(bad), ValidationError);
}

TEST_CASE("softmax_axis slices sum to one") {
    Rng rng(10);
    MatXf m = oracle::random_matrix(rng, 5, 7);
    MatXf rows = softmax_axis(m, 1);
    for (Index r = 0; r < 5; ++r) CHECK(rows.row(r).sum() == doctest::Approx(1.0).epsilon(1e-6));
    MatXf cols = softmax_axis(m, 0);
    for (Index c = 0; c < 7; ++c) CHECK(cols.col(c).sum() == doctest::Approx(1.0).epsilon(1e-6));
    CHECK((rows.array() > 0.f).all());
    CHECK((rows.array() < 1.f).all());
}

TEST_CASE("layer_norm") {
    VecXf gamma = VecXf::Ones(4), beta = VecXf::Zero(4);
    MatXf c(1, 4);
    c.setConstant(3.f);
    MatXf out = layer_norm(c, gamma, beta, 1e-5f);
    CHECK(out.cwiseAbs().maxCoeff() <= 1e-4f);

    MatXf pm(1, 2);
    pm << 1.f, -1.f;
    MatXf out2 = layer_norm(pm, VecXf::Ones(2), VecXf::Zero(2), 0.f);
    CHECK(out2(0, 0) == doctest::Approx(1.f));
    CHECK(out2(0, 1) == doctest::Approx(-1.f));

    Rng rng(11);
    MatXf r = oracle::random_matrix(rng, 6, 16, 2.0);
    MatXf nr = layer_norm(r, VecXf::Ones(16), VecXf::Zero(16), 0.f);
    for (Index i = 0; i < 6; ++i) {
        CHECK(std::abs(nr.row(i).mean()) <= 1e-6f);
        const float var = (nr.row(i).array() - nr.row(i).mean()).square().sum() / 16.f;
        CHECK(var == doctest::Approx(1.0).epsilon(1e-5));
    }

    CHECK_THROWS_AS(layer_norm(MatXf::Ones(1, 1), VecXf::Ones(1), VecXf::Zero(1), 0.f),
                    ShapeError);
}

TEST_CASE("l2_normalize") {
    VecXf v(2);
    v << 3.f, 4.f;
    VecXf u = l2_normalize(v);
    CHECK(u[0] == doctest::Approx(0.6));
    CHECK(u[1] == doctest::Approx(0.8));
    CHECK(u.norm() == doctest::Approx(1.0).epsilon(1e-6));

    VecXf uu = l2_normalize(u);
    CHECK((uu - u).cwiseAbs().maxCoeff() <= 1e-6f);

    Rng rng(12);
    VecXf r = oracle::random_vector(rng, 8);
    VecXf scaled = r * 17.f;
    CHECK((l2_normalize(r) - l2_normalize(scaled)).cwiseAbs().maxCoeff() <= 1e-6f);

    CHECK_THROWS_AS(l2_normalize(VecXf::Zero(4)), NormalizationError);
}

namespace {

MsaWeights<float> random_msa_weights(Rng& rng, Index d) {
    return {oracle::random_matrix(rng, d, d, 0.3), oracle::random_matrix(rng, d, d, 0.3),
            oracle::random_matrix(rng, d, d, 0.3), oracle::random_matrix(rng, d, d, 0.3),
            oracle::random_vector(rng, d, 0.1),    oracle::random_vector(rng, d, 0.1),
            oracle::random_vector(rng, d, 0.1),    oracle::random_vector(rng, d, 0.1)};
}

} // namespace

TEST_CASE("msa single token with identity projections is identity") {
    const Index d = 4;
    MsaWeights<float> w{MatXf::Identity(d, d), MatXf::Identity(d, d), MatXf::Identity(d, d),
                        MatXf::Identity(d, d), VecXf::Zero(d),        VecXf::Zero(d),
                        VecXf::Zero(d),        VecXf::Zero(d)};
    MatXf x(1, d);
    x << 0.5f, -1.f, 2.f, 0.25f;
    MatXf out = msa(x, w, 1);
    CHECK((out - x).cwiseAbs().maxCoeff() <= 1e-6f);
}

TEST_CASE("msa identical tokens produce identical outputs") {
    Rng rng(13);
    const Index d = 8;
    MsaWeights<float> w = random_msa_weights(rng, d);
    MatXf x(2, d);
    x.row(0) = oracle::random_vector(rng, d).transpose();
    x.row(1) = x.row(0);
    MatXf out = msa(x, w, 2);
    CHECK((out.row(0) - out.row(1)).cwiseAbs().maxCoeff() <= 1e-6f);
}

TEST_CASE("msa matches naive oracle") {
    Rng rng(14);
    const Index d = 8;
    MsaWeights<float> w = random_msa_weights(rng, d);
    MatXf x = oracle::random_matrix(rng, 4, d);
    MatXf got = msa(x, w, 2);
    MatXd want = oracle::msa(x, w.wq, w.bq, w.wk, w.bk, w.wv, w.bv, w.wo, w.bo, 2);
    CHECK(oracle::rel_error(got.reshaped(), want.reshaped()) <= 1e-5);
}

TEST_CASE("msa oracle property over 100 random cases") {
    Rng rng(15);
    for (int t = 0; t < 100; ++t) {
        const int heads = 1 << rng.bounded(3);
        const Index dh = 2 + static_cast<Index>(rng.bounded(6));
        const Index d = heads * dh;
        const Index n = 1 + static_cast<Index>(rng.bounded(8));
        MsaWeights<float> w = random_msa_weights(rng, d);
        MatXf x = oracle::random_matrix(rng, n, d);
        MatXf got = msa(x, w, heads);
        MatXd want = oracle::msa(x, w.wq, w.bq, w.wk, w.bk, w.wv, w.bv, w.wo, w.bo, heads);
        CHECK(oracle::rel_error(got.reshaped(), want.reshaped()) <= 1e-5);
    }
}

TEST_CASE("msa permutation equivariance") {
    Rng rng(16);
    const Index n = 6, d = 8;
    MsaWeights<float> w = random_msa_weights(rng, d);
    MatXf x = oracle::random_matrix(rng, n, d);
    std::vector<Index> perm{3, 1, 5, 0, 4, 2};
    MatXf px(n, d);
    for (Index i = 0; i < n; ++i) px.row(i) = x.row(perm[static_cast<std::size_t>(i)]);
    MatXf a = msa(x, w, 2), b = msa(px, w, 2);
    for (Index i = 0; i < n; ++i)
        CHECK((b.row(i) - a.row(perm[static_cast<std::size_t>(i)])).cwiseAbs().maxCoeff() <=
              1e-5f);
}

TEST_CASE("msa rejects indivisible head split") {
    Rng rng(17);
    MsaWeights<float> w = random_msa_weights(rng, 6);
    MatXf x = oracle::random_matrix(rng, 2, 6);
    CHECK_THROWS_AS(msa(x, w, 4), ConfigError);
}

TEST_CASE("mlp_block") {
    const Index d = 4;
    MatXf x(2, d);
    x << 0.5f, -1.f, 2.f, 0.f, 1.f, 1.f, -0.5f, 3.f;

    // zero weights -> zero output
    MatXf z = mlp_block(x, MatXf::Zero(d, d), VecXf::Zero(d), MatXf::Zero(d, d), VecXf::Zero(d));
    CHECK(z.cwiseAbs().maxCoeff() == 0.f);

    // identity weights reduce to elementwise GELU
    MatXf g = mlp_block(x, MatXf::Identity(d, d), VecXf::Zero(d), MatXf::Identity(d, d),
                        VecXf::Zero(d));
    for (Index i = 0; i < x.size(); ++i)
        CHECK(static_cast<double>(g.reshaped()(i)) ==
              doctest::Approx(oracle::gelu(x.reshaped()(i))).epsilon(1e-5));

    // random case vs composed oracle
    Rng rng(18);
    MatXf w1 = oracle::random_matrix(rng, d, 6), w2 = oracle::random_matrix(rng, 6, d);
    VecXf b1 = oracle::random_vector(rng, 6), b2 = oracle::random_vector(rng, d);
    MatXf got = mlp_block(x, w1, b1, w2, b2);
    MatXd hidden = oracle::linear(x, w1, b1);
    MatXf hidden_g(hidden.rows(), hidden.cols());
    for (Index i = 0; i < hidden.size(); ++i)
        hidden_g.reshaped()(i) = static_cast<float>(oracle::gelu(hidden.reshaped()(i)));
    MatXd want = oracle::linear(hidden_g, w2, b2);
    CHECK(oracle::rel_error(got.reshaped(), want.reshaped()) <= 1e-5);
}

TEST_CASE("kernels are pure: repeated calls bit-identical") {
    Rng rng(19);
    Tensorf in = oracle::random_tensor(rng, {6, 6, 3});
    Tensorf k = oracle::random_tensor(rng, {3, 3, 3, 4});
    VecXf b = oracle::random_vector(rng, 4);
    Tensorf a = conv2d(in, k, b), c = conv2d(in, k, b);
    for (Index i = 0; i < a.size(); ++i) CHECK(a[i] == c[i]);
}
