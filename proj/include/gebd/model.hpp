#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "gebd/decoder.hpp"
#include "gebd/encoder.hpp"
#include "gebd/jsonio.hpp"
#include "gebd/similarity.hpp"

namespace gebd {

// Which prediction paths run. Combined trains both passes through the
// learned convex mix; the single-pass variants exist for ablations and put
// that pass's probabilities in p_final directly.
enum class ModelVariant { Combined = 0, DirectOnly = 1, TsmOnly = 2 };

const char* to_string(ModelVariant v);
ModelVariant variant_from_string(const std::string& s);

struct ModelConfig {
  int feature_dim = 0;
  int d_enc = 32;
  int enc_tf_layers = 2;
  int enc_tf_heads = 4;
  int simsiam_hidden = 32;
  DecoderConfig decoder;
  int tsm_head_hidden = 32;
  int head_tf_layers = 2;
  int head_tf_heads = 4;
  ModelVariant variant = ModelVariant::Combined;
  bool stop_gradient = true;

  void validate() const;
  ordered_json to_json() const;
  static ModelConfig from_json(const ordered_json& j);
};

struct ModelForwardCtx {
  BankCtx bank;
  std::vector<Mat> streams;

  // TSM pass
  SimilarityStack stack;
  bool degenerate_tsm = false;
  TsmDecoderCtx dec;
  Ten3 dec_out;
  Mat diag;
  TsmHeadCtx tsm_head;

  // direct pass
  DirectHeadCtx direct_head;

  // contrastive branch (only populated when masks were supplied)
  std::vector<SimSiamCtx> simsiam;
  std::vector<Mat> projected;
  std::vector<Mat> contra_sims;  // per stream, sim[i][j] = cos(enc_i, proj_j)
  const std::vector<const ContrastiveMask*>* masks = nullptr;
  ContrastiveLossResult contra;

  PassPredictions preds;
};

// The full network: encoder bank, per-stream projection heads, TSM decoder
// pass, direct transformer pass, learned per-class mixing. Parameter
// traversal order is fixed and shared with the checkpoint format.
class GebdModel {
 public:
  explicit GebdModel(const ModelConfig& cfg);

  void init(uint64_t seed);
  nn::ParamList params();
  const ModelConfig& config() const { return cfg_; }
  const EncoderBank& bank() const { return enc_; }

  // Training-time forward. When masks is non-null it must hold 12 entries
  // aligned with the bank layout; the contrastive pieces land in ctx.
  PassPredictions forward(const Mat& features, ModelForwardCtx& ctx,
                          const std::vector<const ContrastiveMask*>* masks) const;

  // Accumulates parameter gradients from d(loss)/d(p_final) plus
  // lambda_contra times the contrastive term captured in ctx.
  void backward(const Mat& dfinal, double lambda_contra, ModelForwardCtx& ctx);

  // Inference: no masks, no gradient state kept by the caller.
  PassPredictions predict(const Mat& features) const;

  void zero_grad();

 private:
  ModelConfig cfg_;
  EncoderBank enc_;
  std::vector<SimSiamHead> simsiam_;
  TsmDecoder decoder_;
  TsmHead tsm_head_;
  DirectHead direct_head_;
  nn::PTensor raw_alpha_;

  bool runs_tsm() const { return cfg_.variant != ModelVariant::DirectOnly; }
  bool runs_direct() const { return cfg_.variant != ModelVariant::TsmOnly; }
};

}  // namespace gebd
