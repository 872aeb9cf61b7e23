#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "gebd/errors.hpp"
#include "gebd/similarity.hpp"
#include "test_util.hpp"

using namespace gebd;
using testutil::fd_grad;
using testutil::random_mat;
using testutil::rel_err;

namespace {

// Brute-force cell labeling straight from the definition, independent of the
// production code: iterate every boundary to answer "between" and "is a
// boundary" literally.
MaskCell oracle_cell(int i, int j, const std::vector<int>& bounds, int w) {
  if (i == j) return MaskCell::Neutral;
  if (std::abs(i - j) > w) return MaskCell::Neutral;
  for (int b : bounds)
    if (b == i || b == j) return MaskCell::Neutral;
  const int lo = std::min(i, j), hi = std::max(i, j);
  for (int b : bounds)
    if (b > lo && b < hi) return MaskCell::Negative;
  return MaskCell::Positive;
}

ContrastiveMask oracle_mask(const std::vector<int>& bounds, int L, int w) {
  ContrastiveMask m;
  m.L = L;
  m.local_range = w;
  m.cells.resize(static_cast<std::size_t>(L) * L);
  for (int i = 0; i < L; ++i)
    for (int j = 0; j < L; ++j)
      m.cells[static_cast<std::size_t>(i) * L + j] = oracle_cell(i, j, bounds, w);
  return m;
}

bool masks_equal(const ContrastiveMask& a, const ContrastiveMask& b) {
  return a.L == b.L && a.cells == b.cells;
}

Mat rows_mat(const std::vector<std::vector<double>>& rows) {
  Mat m(static_cast<int>(rows.size()), static_cast<int>(rows[0].size()));
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < rows[i].size(); ++j)
      m.at(static_cast<int>(i), static_cast<int>(j)) = rows[i][j];
  return m;
}

}  // namespace

TEST_CASE("contrastive mask: single boundary reference example") {
  // L = 9, boundary at 4, local range 4.
  auto m = build_contrastive_mask({4}, 9, 4);
  CHECK(m.at(3, 5) == MaskCell::Negative);   // boundary strictly between
  CHECK(m.at(0, 3) == MaskCell::Positive);   // same side, within range
  CHECK(m.at(0, 8) == MaskCell::Neutral);    // |0-8| > 4
  for (int j = 0; j < 9; ++j) {
    CHECK(m.at(4, j) == MaskCell::Neutral);  // boundary row is excluded
    CHECK(m.at(j, 4) == MaskCell::Neutral);
    CHECK(m.at(j, j) == MaskCell::Neutral);  // diagonal
  }
  CHECK(masks_equal(m, oracle_mask({4}, 9, 4)));
}

TEST_CASE("contrastive mask: two boundaries") {
  auto m = build_contrastive_mask({1, 4}, 6, 3);
  CHECK(masks_equal(m, oracle_mask({1, 4}, 6, 3)));
  // Indices 2 and 3 sit between the boundaries: a positive pair.
  CHECK(m.at(2, 3) == MaskCell::Positive);
  // 0 and 2 straddle boundary 1.
  CHECK(m.at(0, 2) == MaskCell::Negative);
  // 2 and 5 straddle boundary 4.
  CHECK(m.at(2, 5) == MaskCell::Negative);
  // 0 and 3: boundary 1 lies between.
  CHECK(m.at(0, 3) == MaskCell::Negative);
}

TEST_CASE("contrastive mask matches the brute-force oracle everywhere") {
  for (int L = 1; L <= 10; ++L) {
    for (int w = 1; w <= 4; ++w) {
      std::vector<std::vector<int>> sets = {{}};
      for (int b = 0; b < L; ++b) sets.push_back({b});
      for (int b1 = 0; b1 < L; ++b1)
        for (int b2 = b1 + 1; b2 < L; ++b2) sets.push_back({b1, b2});
      for (const auto& bounds : sets) {
        auto got = build_contrastive_mask(bounds, L, w);
        auto want = oracle_mask(bounds, L, w);
        REQUIRE_MESSAGE(masks_equal(got, want),
                        "L=" << L << " w=" << w
                             << " bounds=" << bounds.size());
        // Symmetry comes with the definition.
        for (int i = 0; i < L; ++i)
          for (int j = 0; j < L; ++j) CHECK(got.at(i, j) == got.at(j, i));
      }
    }
  }
}

TEST_CASE("contrastive mask: oversized local range and validation") {
  // w >= L is legal; every distinct non-boundary pair is then a sample.
  auto m = build_contrastive_mask({2}, 5, 50);
  CHECK(masks_equal(m, oracle_mask({2}, 5, 50)));
  CHECK(m.at(0, 4) == MaskCell::Negative);
  CHECK(m.at(0, 1) == MaskCell::Positive);

  CHECK_THROWS_AS(build_contrastive_mask({}, 0, 4), InputError);
  CHECK_THROWS_AS(build_contrastive_mask({}, 5, 0), ConfigError);
  CHECK_THROWS_AS(build_contrastive_mask({5}, 5, 2), InputError);
  CHECK_THROWS_AS(build_contrastive_mask({-1}, 5, 2), InputError);
}

TEST_CASE("mask counts and rendering") {
  auto m = build_contrastive_mask({2}, 5, 2);
  const int total = 25;
  CHECK(m.count(MaskCell::Positive) + m.count(MaskCell::Negative) +
            m.count(MaskCell::Neutral) ==
        total);

  auto img = render_mask(m, {2});
  // One line per row plus newlines; boundary diagonal marked '#'.
  std::vector<std::string> lines;
  std::size_t start = 0;
  while (start < img.size()) {
    auto end = img.find('\n', start);
    if (end == std::string::npos) end = img.size();
    lines.push_back(img.substr(start, end - start));
    start = end + 1;
  }
  REQUIRE(lines.size() == 5);
  for (const auto& l : lines) CHECK(l.size() == 5);
  CHECK(lines[2][2] == '#');
  CHECK(lines[0][1] == '+');
  CHECK(lines[1][3] == '-');
  CHECK(lines[0][0] == '0');
}

TEST_CASE("pairwise_similarity basics") {
  auto m = rows_mat({{1.0, 0.0}, {0.0, 2.0}, {-3.0, 0.0}, {1.0, 0.0}});
  bool degen = false;
  auto s = pairwise_similarity(m, &degen);
  CHECK(!degen);
  REQUIRE(s.rows == 4);
  REQUIRE(s.cols == 4);
  CHECK(s.at(0, 0) == doctest::Approx(1.0));
  CHECK(s.at(0, 1) == doctest::Approx(0.0));
  CHECK(s.at(0, 2) == doctest::Approx(-1.0));
  CHECK(s.at(0, 3) == doctest::Approx(1.0));
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j) CHECK(s.at(i, j) == s.at(j, i));

  auto z = rows_mat({{0.0, 0.0}, {1.0, 1.0}});
  auto sz = pairwise_similarity(z, &degen);
  CHECK(degen);
  CHECK(sz.at(0, 0) == 0.0);
  CHECK(sz.at(0, 1) == 0.0);
  CHECK(sz.at(1, 1) == doctest::Approx(1.0));
}

TEST_CASE("stack_tsm stacks per-stream similarity planes in order") {
  Rng rng(31);
  const int L = 5, d = 4;
  std::vector<Mat> streams;
  for (int c = 0; c < kNumStreams; ++c)
    streams.push_back(random_mat(rng, L, d));

  auto stack = stack_tsm(streams);
  REQUIRE(stack.tsm.c == kNumStreams);
  REQUIRE(stack.tsm.h == L);
  REQUIRE(stack.tsm.w == L);
  for (int c = 0; c < kNumStreams; ++c) {
    auto want = pairwise_similarity(streams[c]);
    for (int i = 0; i < L; ++i)
      for (int j = 0; j < L; ++j)
        CHECK(stack.tsm.at(c, i, j) == want.at(i, j));
  }

  std::vector<Mat> wrong(streams.begin(), streams.begin() + 3);
  CHECK_THROWS_AS(stack_tsm(wrong), ShapeError);
}

TEST_CASE("stack_tsm_backward matches finite differences") {
  Rng rng(32);
  const int L = 4, d = 3;
  std::vector<Mat> streams;
  for (int c = 0; c < kNumStreams; ++c)
    streams.push_back(random_mat(rng, L, d));
  auto stack = stack_tsm(streams);

  Ten3 r(kNumStreams, L, L);
  for (double& v : r.v) v = rng.uniform(-1.0, 1.0);

  auto f = [&] {
    auto s = stack_tsm(streams);
    double acc = 0.0;
    for (std::size_t i = 0; i < s.tsm.v.size(); ++i) acc += r.v[i] * s.tsm.v[i];
    return acc;
  };

  std::vector<Mat> dstreams;
  stack_tsm_backward(streams, stack, r, dstreams);
  REQUIRE(dstreams.size() == kNumStreams);
  for (int c = 0; c < kNumStreams; ++c)
    for (std::size_t i = 0; i < streams[c].v.size(); ++i)
      CHECK(rel_err(dstreams[c].v[i], fd_grad(f, &streams[c].v[i])) < 1e-6);
}

TEST_CASE("SimSiamHead is pointwise and differentiable") {
  Rng rng(33);
  const int L = 6, d = 5, hidden = 7;
  SimSiamHead head("head", d, hidden);
  head.init(rng);

  auto x = random_mat(rng, L, d);
  SimSiamCtx ctx;
  auto y = head.forward(x, ctx);
  REQUIRE(y.rows == L);
  REQUIRE(y.cols == d);

  // Pointwise: perturbing row 2 must leave every other row untouched.
  auto x2 = x;
  for (int j = 0; j < d; ++j) x2.at(2, j) += 0.37;
  SimSiamCtx ctx2;
  auto y2 = head.forward(x2, ctx2);
  for (int i = 0; i < L; ++i)
    for (int j = 0; j < d; ++j) {
      if (i == 2) continue;
      CHECK(y2.at(i, j) == y.at(i, j));
    }

  // Parameter gradients against finite differences.
  auto rmat = random_mat(rng, L, d);
  auto f = [&] {
    SimSiamCtx c;
    auto out = head.forward(x, c);
    double acc = 0.0;
    for (std::size_t i = 0; i < out.v.size(); ++i) acc += rmat.v[i] * out.v[i];
    return acc;
  };
  nn::ParamList params;
  head.collect(params);
  for (auto* p : params)
    std::fill(p->g.begin(), p->g.end(), 0.0);
  auto dx = head.backward(rmat, ctx);
  for (auto* p : params)
    for (std::size_t i = 0; i < p->v.size(); ++i)
      CHECK(rel_err(p->g[i], fd_grad(f, &p->v[i])) < 1e-6);
  for (std::size_t i = 0; i < x.v.size(); ++i)
    CHECK(rel_err(dx.v[i], fd_grad(f, &x.v[i])) < 1e-6);
}

TEST_CASE("contrastive loss reference values") {
  // One stream, all positives at 0.9 and negatives at 0.1: loss -0.8.
  const int L = 9;
  auto mask = build_contrastive_mask({4}, L, 4);
  Mat sims(L, L);
  for (int i = 0; i < L; ++i)
    for (int j = 0; j < L; ++j) {
      switch (mask.at(i, j)) {
        case MaskCell::Positive: sims.at(i, j) = 0.9; break;
        case MaskCell::Negative: sims.at(i, j) = 0.1; break;
        case MaskCell::Neutral: sims.at(i, j) = -7.0; break;  // must be ignored
      }
    }
  std::vector<const ContrastiveMask*> masks{&mask};
  auto r = contrastive_loss({sims}, masks);
  CHECK(r.loss == doctest::Approx(-0.8).epsilon(1e-12));
  CHECK(r.active_streams == 1);
  CHECK(!r.all_skipped);

  // A constant matrix scores zero regardless of the constant.
  Mat flat(L, L);
  std::fill(flat.v.begin(), flat.v.end(), 0.42);
  CHECK(contrastive_loss({flat}, masks).loss == doctest::Approx(0.0));

  // Perfect separation hits the minimum of -2.
  Mat best(L, L);
  for (int i = 0; i < L; ++i)
    for (int j = 0; j < L; ++j)
      best.at(i, j) = mask.at(i, j) == MaskCell::Negative ? -1.0 : 1.0;
  CHECK(contrastive_loss({best}, masks).loss == doctest::Approx(-2.0));
}

TEST_CASE("contrastive loss skips streams without both sample kinds") {
  // No boundaries: the mask has positives but no negatives, so the stream is
  // skipped and the overall result flags it.
  const int L = 6;
  auto no_neg = build_contrastive_mask({}, L, 3);
  CHECK(no_neg.count(MaskCell::Negative) == 0);
  Mat sims(L, L);
  std::fill(sims.v.begin(), sims.v.end(), 0.5);

  auto r = contrastive_loss({sims}, {&no_neg});
  CHECK(r.loss == 0.0);
  CHECK(r.active_streams == 0);
  CHECK(r.all_skipped);
  for (const auto& g : contrastive_loss_grad({sims}, {&no_neg}))
    for (double v : g.v) CHECK(v == 0.0);

  // Mixed bag: one active stream and one skipped stream; only the active one
  // counts and its weight is 1/1.
  auto active_mask = build_contrastive_mask({3}, L, 3);
  Mat hot(L, L);
  for (int i = 0; i < L; ++i)
    for (int j = 0; j < L; ++j)
      hot.at(i, j) = active_mask.at(i, j) == MaskCell::Negative ? 0.2 : 0.6;
  auto mixed = contrastive_loss({hot, sims}, {&active_mask, &no_neg});
  CHECK(mixed.active_streams == 1);
  CHECK(!mixed.all_skipped);
  CHECK(mixed.loss == doctest::Approx(0.2 - 0.6));
}

TEST_CASE("contrastive loss gradient: closed form and finite differences") {
  Rng rng(34);
  const int L = 8;
  auto m0 = build_contrastive_mask({3}, L, 4);
  auto m1 = build_contrastive_mask({2, 5}, L, 3);
  std::vector<const ContrastiveMask*> masks{&m0, &m1};
  std::vector<Mat> sims{random_mat(rng, L, L), random_mat(rng, L, L)};

  auto grads = contrastive_loss_grad(sims, masks);
  REQUIRE(grads.size() == 2);

  // Closed form: with both streams active, a negative cell carries
  // +1 / (num_neg * 2) and a positive cell -1 / (num_pos * 2).
  for (int s = 0; s < 2; ++s) {
    const auto& mask = *masks[s];
    const double gp = -1.0 / (mask.count(MaskCell::Positive) * 2.0);
    const double gn = 1.0 / (mask.count(MaskCell::Negative) * 2.0);
    for (int i = 0; i < L; ++i)
      for (int j = 0; j < L; ++j) {
        const double g = grads[s].at(i, j);
        switch (mask.at(i, j)) {
          case MaskCell::Positive: CHECK(g == doctest::Approx(gp)); break;
          case MaskCell::Negative: CHECK(g == doctest::Approx(gn)); break;
          case MaskCell::Neutral: CHECK(g == 0.0); break;
        }
      }
  }

  // And the same numbers from finite differences on the loss itself.
  auto f = [&] { return contrastive_loss(sims, masks).loss; };
  for (int s = 0; s < 2; ++s)
    for (std::size_t i = 0; i < sims[s].v.size(); ++i)
      CHECK(std::abs(grads[s].v[i] - fd_grad(f, &sims[s].v[i])) < 1e-8);
}

TEST_CASE("contrastive loss validates shape agreement") {
  auto mask = build_contrastive_mask({2}, 6, 3);
  Mat wrong(5, 5);
  CHECK_THROWS_AS(contrastive_loss({wrong}, {&mask}), ShapeError);
  Mat ok(6, 6);
  Mat extra(6, 6);
  std::vector<const ContrastiveMask*> one{&mask};
  CHECK_THROWS_AS(contrastive_loss({ok, extra}, one), ShapeError);
}
