#include "hfz/random.hpp"
#include "hfz/recurrent.hpp"
#include "oracle/oracles.hpp"

#include <doctest.h>

#include <cmath>

using namespace hfz;
using Mat = Matrix<double>;
using State = RecurrentState<double>;

namespace {

Mat random_matrix(Index rows, Index cols, Rng& rng, double scale = 0.5) {
  Mat m(rows, cols);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = rng.normal(0.0, scale);
  return m;
}

LstmCellParams<double> random_lstm(Index in, Index hidden, Rng& rng) {
  auto p = LstmCellParams<double>::zeros(in, hidden);
  p.input_weights = random_matrix(in, 4 * hidden, rng);
  p.hidden_weights = random_matrix(hidden, 4 * hidden, rng);
  p.bias = random_matrix(1, 4 * hidden, rng);
  return p;
}

ConvLstmCellParams<double> random_conv(Index k, Index channels, Index filters, Rng& rng) {
  auto p = ConvLstmCellParams<double>::zeros(k, k, channels, filters);
  p.input_kernels = random_matrix(p.input_kernels.rows(), p.input_kernels.cols(), rng);
  p.hidden_kernels = random_matrix(p.hidden_kernels.rows(), p.hidden_kernels.cols(), rng);
  p.bias = random_matrix(1, 4 * filters, rng);
  return p;
}

oracle::State to_oracle(const State& s) { return {oracle::to_vec(s.hidden), oracle::to_vec(s.cell)}; }

double max_diff(const Mat& a, const oracle::Vec& b) {
  double worst = 0.0;
  const oracle::Vec av = oracle::to_vec(a);
  REQUIRE(av.size() == b.size());
  for (std::size_t i = 0; i < b.size(); ++i) worst = std::max(worst, std::abs(av[i] - b[i]));
  return worst;
}

// Parameter packing so finite differences can perturb every weight.
Eigen::VectorXd pack(const LstmCellParams<double>& p) {
  Eigen::VectorXd v(p.input_weights.size() + p.hidden_weights.size() + p.bias.size());
  v << p.input_weights.reshaped(), p.hidden_weights.reshaped(), p.bias.transpose();
  return v;
}
Eigen::VectorXd pack(const ConvLstmCellParams<double>& p) {
  Eigen::VectorXd v(p.input_kernels.size() + p.hidden_kernels.size() + p.bias.size());
  v << p.input_kernels.reshaped(), p.hidden_kernels.reshaped(), p.bias.transpose();
  return v;
}
template <typename P>
P unpack(P p, const Eigen::VectorXd& v) {
  auto& a = [&]() -> auto& {
    if constexpr (std::is_same_v<P, LstmCellParams<double>>) return p.input_weights;
    else return p.input_kernels;
  }();
  auto& b = [&]() -> auto& {
    if constexpr (std::is_same_v<P, LstmCellParams<double>>) return p.hidden_weights;
    else return p.hidden_kernels;
  }();
  Index at = 0;
  a.reshaped() = v.segment(at, a.size());
  at += a.size();
  b.reshaped() = v.segment(at, b.size());
  at += b.size();
  p.bias = v.segment(at, p.bias.size()).transpose();
  return p;
}

}  // namespace

TEST_CASE("lstm step closed forms") {
  const auto zero = LstmCellParams<double>::zeros(2, 3);
  State s = State::zeros(1, 3);
  s.cell << 1.0, -2.0, 0.4;
  const State next = lstm_cell_step(Mat(Mat::Ones(1, 2)), s, zero);
  for (Index k = 0; k < 3; ++k) {
    CHECK(std::abs(next.cell(0, k) - 0.5 * s.cell(0, k)) < 1e-15);
    CHECK(std::abs(next.hidden(0, k) - 0.5 * std::tanh(0.5 * s.cell(0, k))) < 1e-15);
  }
  const State fixed = lstm_cell_step(Mat(Mat::Zero(1, 2)), State::zeros(1, 3), zero);
  CHECK(fixed.hidden.isZero(0.0));
  CHECK(fixed.cell.isZero(0.0));
}

TEST_CASE("lstm step matches the scalar oracle") {
  Rng rng(42);
  const auto p = random_lstm(4, 3, rng);
  Mat x(1, 4);
  x << 1.0, 0.0, -1.0, 0.5;
  for (const State& s : {State::zeros(1, 3), State{random_matrix(1, 3, rng), random_matrix(1, 3, rng)}}) {
    const State got = lstm_cell_step(x, s, p);
    const oracle::State ref = oracle::lstm_step(oracle::to_vec(x), to_oracle(s), oracle::to_vec(p.input_weights),
                                                oracle::to_vec(p.hidden_weights), oracle::to_vec(p.bias));
    CHECK(max_diff(got.hidden, ref.h) < 1e-12);
    CHECK(max_diff(got.cell, ref.c) < 1e-12);
  }
}

TEST_CASE("lstm step rejects shape mismatches") {
  Rng rng(1);
  const auto p = random_lstm(4, 3, rng);
  CHECK_THROWS_AS(lstm_cell_step(Mat(Mat::Zero(1, 5)), State::zeros(1, 3), p), std::invalid_argument);
  CHECK_THROWS_AS(lstm_cell_step(Mat(Mat::Zero(2, 4)), State::zeros(1, 3), p), std::invalid_argument);
  CHECK_THROWS_AS(lstm_cell_step(Mat(Mat::Zero(1, 4)), State::zeros(1, 2), p), std::invalid_argument);
  CHECK_THROWS_AS(lstm_cell_step(Mat(Mat::Zero(1, 4)), State{Mat::Zero(1, 3), Mat::Zero(1, 2)}, p),
                  std::invalid_argument);
  auto bad = p;
  bad.bias.resize(5);
  CHECK_THROWS_AS(lstm_cell_step(Mat(Mat::Zero(1, 4)), State::zeros(1, 3), bad), std::invalid_argument);
}

TEST_CASE("convlstm step closed form") {
  const auto zero = ConvLstmCellParams<double>::zeros(3, 3, 1, 2);
  Rng rng(5);
  State s = State::zeros(12, 2);
  s.cell = random_matrix(12, 2, rng, 2.0);
  const State next = convlstm_cell_step(random_matrix(12, 1, rng), 3, 4, s, zero);
  CHECK((next.cell - 0.5 * s.cell).cwiseAbs().maxCoeff() < 1e-15);
  CHECK((next.hidden - (0.5 * (0.5 * s.cell.array()).tanh()).matrix()).cwiseAbs().maxCoeff() < 1e-15);
}

TEST_CASE("1x1 convlstm on a single pixel equals the lstm step") {
  Rng rng(8);
  const auto conv = random_conv(1, 3, 2, rng);
  LstmCellParams<double> lstm{conv.input_kernels, conv.hidden_kernels, conv.bias};
  const Mat x = random_matrix(1, 3, rng);
  const State s{random_matrix(1, 2, rng), random_matrix(1, 2, rng)};
  const State a = convlstm_cell_step(x, 1, 1, s, conv);
  const State b = lstm_cell_step(x, s, lstm);
  CHECK((a.hidden - b.hidden).cwiseAbs().maxCoeff() < 1e-15);
  CHECK((a.cell - b.cell).cwiseAbs().maxCoeff() < 1e-15);
}

TEST_CASE("convlstm step matches the nested-loop convolution oracle") {
  struct Case {
    Index h, w, c, f, k;
  };
  for (const Case& cs : {Case{5, 5, 1, 2, 3}, Case{4, 6, 2, 3, 3}, Case{6, 5, 1, 1, 5}}) {
    Rng rng(7);
    const auto p = random_conv(cs.k, cs.c, cs.f, rng);
    const Mat x = random_matrix(cs.h * cs.w, cs.c, rng, 1.0);
    const State s{random_matrix(cs.h * cs.w, cs.f, rng), random_matrix(cs.h * cs.w, cs.f, rng)};
    const State got = convlstm_cell_step(x, cs.h, cs.w, s, p);
    const oracle::ConvShape d{int(cs.h), int(cs.w), int(cs.c), int(cs.f), int(cs.k), int(cs.k)};
    const oracle::State ref = oracle::convlstm_step(oracle::to_vec(x), to_oracle(s), oracle::to_vec(p.input_kernels),
                                                    oracle::to_vec(p.hidden_kernels), oracle::to_vec(p.bias), d);
    CHECK(max_diff(got.hidden, ref.h) < 1e-12);
    CHECK(max_diff(got.cell, ref.c) < 1e-12);
  }
}

TEST_CASE("convlstm rejects bad geometry") {
  Rng rng(2);
  const auto p = random_conv(3, 1, 2, rng);
  CHECK_THROWS_AS(convlstm_cell_step(Mat(Mat::Zero(20, 1)), 4, 4, State::zeros(16, 2), p),
                  std::invalid_argument);
  CHECK_THROWS_AS(convlstm_cell_step(Mat(Mat::Zero(16, 1)), 4, 4, State::zeros(20, 2), p),
                  std::invalid_argument);
  CHECK_THROWS_AS(convlstm_cell_step(Mat(Mat::Zero(16, 2)), 4, 4, State::zeros(16, 2), p),
                  std::invalid_argument);
  auto even = ConvLstmCellParams<double>::zeros(2, 2, 1, 1);
  CHECK_THROWS_AS(convlstm_cell_step(Mat(Mat::Zero(16, 1)), 4, 4, State::zeros(16, 1), even),
                  std::invalid_argument);
}

TEST_CASE("im2col and col2im are adjoint") {
  Rng rng(4);
  const Mat map = random_matrix(12, 2, rng);
  const Mat cols = random_matrix(12, 3 * 3 * 2, rng);
  const Mat a = im2col(map, 3, 4, 3, 3);
  CHECK(a.rows() == 12);
  CHECK(a.cols() == 18);
  const double lhs = (a.array() * cols.array()).sum();
  const double rhs = (map.array() * col2im(cols, 3, 4, 3, 3, 2).array()).sum();
  CHECK(std::abs(lhs - rhs) < 1e-12);
}

TEST_CASE("unroll") {
  Rng rng(3);
  const LstmCell<double> cell{random_lstm(4, 5, rng)};
  const Mat x = random_matrix(1, 4, rng);
  const auto one = unroll(cell, Sequence<double>{x}, State::zeros(1, 5));
  const State step = lstm_cell_step(x, State::zeros(1, 5), cell.params);
  CHECK(one.final_state.hidden == step.hidden);
  CHECK(one.final_state.cell == step.cell);
  CHECK(one.hidden_states.size() == 1);

  Sequence<double> seq;
  for (int t = 0; t < 41; ++t) seq.push_back(random_matrix(1, 4, rng, 1.0));
  const auto run = unroll(cell, seq, State::zeros(1, 5));
  oracle::State ref{oracle::Vec(5, 0.0), oracle::Vec(5, 0.0)};
  for (const Mat& xt : seq) {
    ref = oracle::lstm_step(oracle::to_vec(xt), ref, oracle::to_vec(cell.params.input_weights),
                            oracle::to_vec(cell.params.hidden_weights), oracle::to_vec(cell.params.bias));
  }
  CHECK(run.hidden_states.size() == 41);
  CHECK(max_diff(run.final_state.hidden, ref.h) < 1e-12);
  CHECK(max_diff(run.final_state.cell, ref.c) < 1e-12);

  const LstmCell<double> zero{LstmCellParams<double>::zeros(4, 5)};
  const auto still = unroll(zero, Sequence<double>(6, Mat::Zero(1, 4)), State::zeros(1, 5));
  for (const Mat& h : still.hidden_states) CHECK(h.isZero(0.0));
  CHECK(still.final_state.cell.isZero(0.0));

  CHECK_THROWS_AS(unroll(cell, Sequence<double>{}, State::zeros(1, 5)), std::invalid_argument);
}

TEST_CASE("states stay bounded") {
  Rng rng(12);
  const LstmCell<double> cell{random_lstm(3, 4, rng)};
  State s = State::zeros(1, 4);
  s.cell << 0.5, -1.5, 2.0, 0.0;
  const double c0 = s.cell.cwiseAbs().maxCoeff();
  Sequence<double> seq;
  for (int t = 0; t < 30; ++t) seq.push_back(random_matrix(1, 3, rng, 5.0));
  const auto tr = trace(cell, seq, s);
  for (std::size_t t = 0; t < seq.size(); ++t) {
    CHECK(tr.hidden(t).cwiseAbs().maxCoeff() < 1.0);
    CHECK(tr.states[t + 1].cell.cwiseAbs().maxCoeff() <= double(t + 1) + c0);
  }
}

TEST_CASE("bptt with zero upstream gives zero gradients") {
  Rng rng(6);
  const ConvLstmCell<double> cell{random_conv(3, 1, 2, rng), 4, 4};
  Sequence<double> seq(3, random_matrix(16, 1, rng));
  const auto g = bptt_gradients(cell, seq, State::zeros(16, 2), std::vector<Mat>(3, Mat::Zero(16, 2)));
  CHECK(g.params.input_kernels.isZero(0.0));
  CHECK(g.params.hidden_kernels.isZero(0.0));
  CHECK(g.params.bias.isZero(0.0));
  for (const Mat& dx : g.inputs) CHECK(dx.isZero(0.0));
  CHECK_THROWS_AS(bptt_gradients(cell, seq, State::zeros(16, 2), std::vector<Mat>(2, Mat::Zero(16, 2))),
                  std::invalid_argument);
  CHECK_THROWS_AS(bptt_gradients(cell, seq, State::zeros(16, 2), std::vector<Mat>(3, Mat::Zero(16, 1))),
                  std::invalid_argument);
}

TEST_CASE("lstm bptt matches finite differences") {
  for (std::uint64_t seed : {11u, 12u, 13u}) {
    Rng rng(seed);
    const auto params = random_lstm(3, 4, rng);
    Sequence<double> seq;
    for (int t = 0; t < 5; ++t) seq.push_back(random_matrix(1, 3, rng, 1.0));
    const State init{random_matrix(1, 4, rng), random_matrix(1, 4, rng)};
    // loss = sum of the final hidden state plus a weighted sum over every step
    const Mat weights = random_matrix(5, 4, rng);
    std::vector<Mat> upstream;
    for (int t = 0; t < 5; ++t) upstream.push_back(weights.row(t));
    upstream.back().array() += 1.0;
    auto loss_of = [&](const LstmCellParams<double>& p, const Sequence<double>& xs, const State& s0) {
      const auto run = unroll(LstmCell<double>{p}, xs, s0);
      double total = run.final_state.hidden.sum();
      for (int t = 0; t < 5; ++t) total += (run.hidden_states[t].array() * weights.row(t).array()).sum();
      return total;
    };
    const LstmCell<double> cell{params};
    const auto g = bptt_gradients(cell, seq, init, upstream);

    CHECK(finite_diff_check([&](const Eigen::VectorXd& v) { return loss_of(unpack(params, v), seq, init); },
                            pack(g.params), pack(params)) < 1e-4);

    Eigen::VectorXd xs(15), gx(15);
    for (int t = 0; t < 5; ++t) {
      xs.segment(3 * t, 3) = seq[t].transpose();
      gx.segment(3 * t, 3) = g.inputs[t].transpose();
    }
    CHECK(finite_diff_check(
              [&](const Eigen::VectorXd& v) {
                Sequence<double> s2;
                for (int t = 0; t < 5; ++t) s2.push_back(v.segment(3 * t, 3).transpose());
                return loss_of(params, s2, init);
              },
              gx, xs) < 1e-4);

    Eigen::VectorXd s0(8), gs0(8);
    s0 << init.hidden.transpose(), init.cell.transpose();
    gs0 << g.initial.hidden.transpose(), g.initial.cell.transpose();
    CHECK(finite_diff_check(
              [&](const Eigen::VectorXd& v) {
                return loss_of(params, seq, State{v.head(4).transpose(), v.tail(4).transpose()});
              },
              gs0, s0) < 1e-4);
  }
}

TEST_CASE("convlstm bptt matches finite differences") {
  for (std::uint64_t seed : {21u, 22u, 23u}) {
    Rng rng(seed);
    const Index h = 4, w = 4, f = 2;
    const auto params = random_conv(3, 1, f, rng);
    Sequence<double> seq;
    for (int t = 0; t < 3; ++t) seq.push_back(random_matrix(h * w, 1, rng, 1.0));
    const Mat pool = random_matrix(h * w, f, rng);
    std::vector<Mat> upstream(3, Mat::Zero(h * w, f));
    upstream.back() = pool;
    auto loss_of = [&](const ConvLstmCellParams<double>& p, const Sequence<double>& xs) {
      const auto run = unroll(ConvLstmCell<double>{p, h, w}, xs, State::zeros(h * w, f));
      return (run.final_state.hidden.array() * pool.array()).sum();
    };
    const ConvLstmCell<double> cell{params, h, w};
    const auto g = bptt_gradients(cell, seq, State::zeros(h * w, f), upstream);
    CHECK(finite_diff_check([&](const Eigen::VectorXd& v) { return loss_of(unpack(params, v), seq); },
                            pack(g.params), pack(params)) < 1e-4);

    Eigen::VectorXd xs(3 * h * w), gx(3 * h * w);
    for (int t = 0; t < 3; ++t) {
      xs.segment(t * h * w, h * w) = seq[t].reshaped();
      gx.segment(t * h * w, h * w) = g.inputs[t].reshaped();
    }
    CHECK(finite_diff_check(
              [&](const Eigen::VectorXd& v) {
                Sequence<double> s2;
                for (int t = 0; t < 3; ++t) s2.push_back(v.segment(t * h * w, h * w));
                return loss_of(params, s2);
              },
              gx, xs) < 1e-4);
  }
}
