#pragma once

#include "posetext/prompts.hpp"
#include "posetext/transformer.hpp"

#include <array>
#include <string>
#include <vector>

namespace posetext {

struct TextEncoderConfig {
  int vocab_size = 0;
  int d_model = 32;
  int heads = 4;
  int base_depth = 2;  // shared trunk standing in for the pretrained tower
  int head_depth = 1;  // per-axis refinement stack
  int ffn_mult = 2;
  int max_len = 80;
  int embed_dim = 32;  // E

  static TextEncoderConfig desk(int vocab_size, int embed_dim);
};

inline TextEncoderConfig TextEncoderConfig::desk(int vocab_size, int embed_dim) {
  TextEncoderConfig c;
  c.vocab_size = vocab_size;
  c.embed_dim = embed_dim;
  return c;
}

// Axis-ordered text features from token sequences: shared trainable base
// stack, per-axis head stack, masked mean-pool over non-pad tokens, linear
// projection to the common embedding space, then L2 normalization.
template <typename S>
struct TextEncoder {
  TextEncoderConfig cfg;
  int tok_embed = -1, pos_embed = -1;
  std::vector<TransformerBlockIds> base;
  std::array<std::vector<TransformerBlockIds>, 3> axis_heads;
  std::array<int, 3> ln_f_g{}, ln_f_b{};
  std::array<int, 3> w_out{}, b_out{};

  static TextEncoder create(ParamStore<S>& store, const TextEncoderConfig& cfg) {
    TextEncoder enc;
    enc.cfg = cfg;
    enc.tok_embed = store.add("text.tok_embed", cfg.vocab_size, cfg.d_model,
                              Init::kNormalScaled, 0.02);
    enc.pos_embed = store.add("text.pos_embed", cfg.max_len, cfg.d_model,
                              Init::kNormalScaled, 0.01);
    for (int i = 0; i < cfg.base_depth; ++i)
      enc.base.push_back(make_transformer_block(store, "text.base" + std::to_string(i),
                                                cfg.d_model, cfg.heads,
                                                cfg.ffn_mult * cfg.d_model));
    const char* axes[3] = {"x", "y", "z"};
    for (int a = 0; a < 3; ++a) {
      for (int i = 0; i < cfg.head_depth; ++i)
        enc.axis_heads[a].push_back(make_transformer_block(
            store, std::string("text.phi") + axes[a] + std::to_string(i), cfg.d_model,
            cfg.heads, cfg.ffn_mult * cfg.d_model));
      enc.ln_f_g[a] = store.add(std::string("text.lnf") + axes[a] + ".gain", 1, cfg.d_model,
                                Init::kOne);
      enc.ln_f_b[a] = store.add(std::string("text.lnf") + axes[a] + ".bias", 1, cfg.d_model,
                                Init::kZero);
      enc.w_out[a] = store.add(std::string("text.out") + axes[a] + ".w", cfg.d_model,
                               cfg.embed_dim, Init::kUniformFanIn, cfg.d_model);
      enc.b_out[a] = store.add(std::string("text.out") + axes[a] + ".b", 1, cfg.embed_dim,
                               Init::kZero);
    }
    return enc;
  }

  // One axis; pad_id marks tokens excluded from attention keys and pooling.
  ad::Var<S> encode_axis(ad::Tape<S>& tape, const ParamStore<S>& store, ParamBinding<S>& bind,
                         const TokenSeq& tokens, int axis, int pad_id) const {
    const int seq = static_cast<int>(tokens.ids.size());
    if (seq > cfg.max_len) throw std::runtime_error("prompt too long");
    for (int id : tokens.ids)
      if (id < 0 || id >= cfg.vocab_size)
        throw std::invalid_argument("token id out of vocabulary range");

    ad::Var<S> table = bind.use(tape, store, tok_embed);
    ad::Var<S> x = ad::gather_rows(table, tokens.ids);
    ad::Var<S> pos = ad::slice_rows(bind.use(tape, store, pos_embed), 0, seq);
    x = ad::add(x, pos);

    ad::Arr<S> mask(seq), pool(seq);
    int n_real = 0;
    for (int i = 0; i < seq; ++i) {
      const bool pad = tokens.ids[i] == pad_id;
      mask[i] = pad ? S(-1e9) : S(0);
      if (!pad) ++n_real;
    }
    for (int i = 0; i < seq; ++i)
      pool[i] = (mask[i] == S(0)) ? S(1) / static_cast<S>(n_real) : S(0);
    ad::Var<S> mask_v = tape.input(1, seq, std::move(mask));
    ad::Var<S> pool_v = tape.input(seq, 1, std::move(pool));

    for (const auto& blk : base) x = run_transformer_block(tape, store, bind, blk, x, mask_v);
    for (const auto& blk : axis_heads[axis])
      x = run_transformer_block(tape, store, bind, blk, x, mask_v);
    x = ad::layernorm_rows(x, bind.use(tape, store, ln_f_g[axis]),
                           bind.use(tape, store, ln_f_b[axis]));
    ad::Var<S> pooled = ad::matmul_tn(pool_v, x);  // (1 x d)
    ad::Var<S> feat = ad::add_rowvec(ad::matmul(pooled, bind.use(tape, store, w_out[axis])),
                                     bind.use(tape, store, b_out[axis]));
    return ad::l2_normalize_rows(feat);
  }

  struct Features {
    ad::Var<S> fx, fy, fz;
  };

  Features encode(ad::Tape<S>& tape, const ParamStore<S>& store, ParamBinding<S>& bind,
                  const TokenSeq& tx, const TokenSeq& ty, const TokenSeq& tz,
                  int pad_id) const {
    return Features{encode_axis(tape, store, bind, tx, 0, pad_id),
                    encode_axis(tape, store, bind, ty, 1, pad_id),
                    encode_axis(tape, store, bind, tz, 2, pad_id)};
  }
};

}  // namespace posetext
