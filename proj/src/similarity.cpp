#include "gebd/similarity.hpp"

#include <algorithm>
#include <cstdlib>

#include "gebd/errors.hpp"
#include "gebd/kernels.hpp"

namespace gebd {

int ContrastiveMask::count(MaskCell kind) const {
  int n = 0;
  for (MaskCell c : cells)
    if (c == kind) ++n;
  return n;
}

ContrastiveMask build_contrastive_mask(const std::vector<int>& boundary_indices,
                                       int L, int w) {
  if (L <= 0) throw InputError("mask length must be positive");
  if (w < 1)
    throw ConfigError("local range must be >= 1, got " + std::to_string(w));
  std::vector<char> is_boundary(static_cast<std::size_t>(L), 0);
  for (int b : boundary_indices) {
    if (b < 0 || b >= L)
      throw InputError("boundary index " + std::to_string(b) +
                       " outside [0, " + std::to_string(L) + ")");
    is_boundary[static_cast<std::size_t>(b)] = 1;
  }
  // prefix[t] = number of boundaries at indices < t
  std::vector<int> prefix(static_cast<std::size_t>(L) + 1, 0);
  for (int t = 0; t < L; ++t)
    prefix[static_cast<std::size_t>(t) + 1] =
        prefix[static_cast<std::size_t>(t)] + (is_boundary[static_cast<std::size_t>(t)] ? 1 : 0);

  ContrastiveMask mask;
  mask.L = L;
  mask.local_range = w;
  mask.cells.assign(static_cast<std::size_t>(L) * L, MaskCell::Neutral);
  for (int i = 0; i < L; ++i) {
    for (int j = 0; j < L; ++j) {
      if (i == j || std::abs(i - j) > w) continue;
      if (is_boundary[static_cast<std::size_t>(i)] ||
          is_boundary[static_cast<std::size_t>(j)])
        continue;
      int lo = std::min(i, j), hi = std::max(i, j);
      // boundaries strictly inside (lo, hi)
      bool crossed = prefix[static_cast<std::size_t>(hi)] -
                         prefix[static_cast<std::size_t>(lo) + 1] >
                     0;
      mask.cells[static_cast<std::size_t>(i) * L + j] =
          crossed ? MaskCell::Negative : MaskCell::Positive;
    }
  }
  return mask;
}

std::string render_mask(const ContrastiveMask& mask,
                        const std::vector<int>& boundary_indices) {
  std::vector<char> is_boundary(static_cast<std::size_t>(mask.L), 0);
  for (int b : boundary_indices)
    if (b >= 0 && b < mask.L) is_boundary[static_cast<std::size_t>(b)] = 1;
  std::string out;
  out.reserve(static_cast<std::size_t>(mask.L) * (mask.L + 1));
  for (int i = 0; i < mask.L; ++i) {
    for (int j = 0; j < mask.L; ++j) {
      char c = '0';
      if (i == j && is_boundary[static_cast<std::size_t>(i)]) {
        c = '#';
      } else {
        switch (mask.at(i, j)) {
          case MaskCell::Positive: c = '+'; break;
          case MaskCell::Negative: c = '-'; break;
          case MaskCell::Neutral: c = '0'; break;
        }
      }
      out.push_back(c);
    }
    out.push_back('\n');
  }
  return out;
}

Mat pairwise_similarity(const Mat& stream, bool* degenerate) {
  Mat sim(stream.rows, stream.rows);
  bool flag = false;
  kernels::pairwise_cosine(stream.v.data(), stream.rows, stream.cols,
                           sim.v.data(), &flag);
  if (degenerate) *degenerate = flag;
  return sim;
}

SimilarityStack stack_tsm(const std::vector<Mat>& streams, bool* degenerate) {
  if (static_cast<int>(streams.size()) != kNumStreams)
    throw ShapeError("expected " + std::to_string(kNumStreams) +
                     " streams, got " + std::to_string(streams.size()));
  const int L = streams[0].rows;
  for (const Mat& s : streams)
    if (s.rows != L)
      throw ShapeError("stream length mismatch in TSM stack");
  SimilarityStack out;
  out.tsm = Ten3(kNumStreams, L, L);
  bool any_flag = false;
  for (int c = 0; c < kNumStreams; ++c) {
    const Mat& s = streams[static_cast<std::size_t>(c)];
    bool flag = false;
    kernels::pairwise_cosine(s.v.data(), s.rows, s.cols, out.tsm.plane(c),
                             &flag);
    any_flag = any_flag || flag;
  }
  if (degenerate) *degenerate = any_flag;
  return out;
}

void stack_tsm_backward(const std::vector<Mat>& streams,
                        const SimilarityStack& stack, const Ten3& dstack,
                        std::vector<Mat>& dstreams) {
  if (static_cast<int>(streams.size()) != kNumStreams)
    throw ShapeError("TSM backward expects 12 streams");
  if (dstreams.empty()) dstreams.resize(kNumStreams);
  if (static_cast<int>(dstreams.size()) != kNumStreams)
    throw ShapeError("TSM backward expects 12 gradient slots");
  for (int c = 0; c < kNumStreams; ++c) {
    const Mat& s = streams[static_cast<std::size_t>(c)];
    Mat& d = dstreams[static_cast<std::size_t>(c)];
    if (d.rows != s.rows || d.cols != s.cols) d = Mat(s.rows, s.cols);
    kernels::pairwise_cosine_bwd(s.v.data(), s.rows, s.cols, stack.tsm.plane(c),
                                 dstack.plane(c), d.v.data());
  }
}

SimSiamHead::SimSiamHead(std::string name, int d, int hidden)
    : c1_(name + ".c1", d, hidden, 1), c2_(name + ".c2", hidden, d, 1) {}

void SimSiamHead::init(Rng& rng) {
  c1_.init(rng);
  c2_.init(rng);
}

void SimSiamHead::collect(nn::ParamList& out) {
  c1_.collect(out);
  c2_.collect(out);
}

Mat SimSiamHead::forward(const Mat& x, SimSiamCtx& ctx) const {
  Mat h = c1_.forward(x, ctx.c1);
  ctx.pre = h;
  for (double& v : h.v) v = v > 0.0 ? v : 0.0;
  return c2_.forward(h, ctx.c2);
}

Mat SimSiamHead::backward(const Mat& dy, const SimSiamCtx& ctx) {
  Mat dh = c2_.backward(dy, ctx.c2);
  for (std::size_t i = 0; i < dh.v.size(); ++i)
    if (ctx.pre.v[i] <= 0.0) dh.v[i] = 0.0;
  return c1_.backward(dh, ctx.c1);
}

namespace {

struct MaskCounts {
  int pos = 0;
  int neg = 0;
  bool active() const { return pos > 0 && neg > 0; }
};

MaskCounts counts_of(const ContrastiveMask& m) {
  MaskCounts c;
  for (MaskCell cell : m.cells) {
    if (cell == MaskCell::Positive) ++c.pos;
    else if (cell == MaskCell::Negative) ++c.neg;
  }
  return c;
}

void check_aligned(const std::vector<Mat>& sims,
                   const std::vector<const ContrastiveMask*>& masks) {
  if (sims.size() != masks.size())
    throw ShapeError("contrastive loss: sims/masks size mismatch");
  for (std::size_t s = 0; s < sims.size(); ++s) {
    if (!masks[s]) throw InputError("contrastive loss: null mask");
    if (sims[s].rows != masks[s]->L || sims[s].cols != masks[s]->L)
      throw ShapeError("contrastive loss: mask/matrix shape mismatch");
  }
}

}  // namespace

ContrastiveLossResult contrastive_loss(
    const std::vector<Mat>& sims,
    const std::vector<const ContrastiveMask*>& masks) {
  check_aligned(sims, masks);
  ContrastiveLossResult res;
  double total = 0.0;
  for (std::size_t s = 0; s < sims.size(); ++s) {
    MaskCounts c = counts_of(*masks[s]);
    if (!c.active()) continue;  // stream contributes nothing
    double pos_sum = 0.0, neg_sum = 0.0;
    const Mat& m = sims[s];
    const ContrastiveMask& mask = *masks[s];
    for (int i = 0; i < m.rows; ++i)
      for (int j = 0; j < m.cols; ++j) {
        MaskCell cell = mask.at(i, j);
        if (cell == MaskCell::Positive) pos_sum += m.at(i, j);
        else if (cell == MaskCell::Negative) neg_sum += m.at(i, j);
      }
    total += neg_sum / c.neg - pos_sum / c.pos;
    ++res.active_streams;
  }
  if (res.active_streams == 0) {
    res.all_skipped = true;
    res.loss = 0.0;
  } else {
    res.loss = total / res.active_streams;
  }
  return res;
}

std::vector<Mat> contrastive_loss_grad(
    const std::vector<Mat>& sims,
    const std::vector<const ContrastiveMask*>& masks) {
  check_aligned(sims, masks);
  std::vector<Mat> grads;
  grads.reserve(sims.size());
  int active = 0;
  std::vector<MaskCounts> counts(sims.size());
  for (std::size_t s = 0; s < sims.size(); ++s) {
    counts[s] = counts_of(*masks[s]);
    if (counts[s].active()) ++active;
  }
  for (std::size_t s = 0; s < sims.size(); ++s) {
    Mat g(sims[s].rows, sims[s].cols);
    if (active > 0 && counts[s].active()) {
      const double gpos = -1.0 / (static_cast<double>(counts[s].pos) * active);
      const double gneg = 1.0 / (static_cast<double>(counts[s].neg) * active);
      const ContrastiveMask& mask = *masks[s];
      for (int i = 0; i < g.rows; ++i)
        for (int j = 0; j < g.cols; ++j) {
          MaskCell cell = mask.at(i, j);
          if (cell == MaskCell::Positive) g.at(i, j) = gpos;
          else if (cell == MaskCell::Negative) g.at(i, j) = gneg;
        }
    }
    grads.push_back(std::move(g));
  }
  return grads;
}

}  // namespace gebd
