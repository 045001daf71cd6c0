#pragma once

#include "posetext/autodiff.hpp"
#include "posetext/params.hpp"

#include <string>
#include <vector>

namespace posetext {

// Pre-norm transformer encoder block: x + MHA(LN(x)), then x + FFN(LN(x)).
// Heads carry their own projection matrices; the per-head output maps sum
// into the residual, which is equivalent to concat followed by a single
// output projection.
struct TransformerBlockIds {
  int ln1_g, ln1_b, ln2_g, ln2_b;
  std::vector<int> w_q, w_k, w_v, w_o;  // per head: (d x dh), (d x dh), (d x dh), (dh x d)
  int b_o;
  int w_ff1, b_ff1, w_ff2, b_ff2;
  int dim = 0, heads = 0, head_dim = 0, ffn_hidden = 0;
};

template <typename S>
TransformerBlockIds make_transformer_block(ParamStore<S>& store, const std::string& prefix,
                                           int dim, int heads, int ffn_hidden) {
  if (dim % heads != 0) throw std::invalid_argument("transformer dim must divide heads");
  TransformerBlockIds b;
  b.dim = dim;
  b.heads = heads;
  b.head_dim = dim / heads;
  b.ffn_hidden = ffn_hidden;
  b.ln1_g = store.add(prefix + ".ln1.gain", 1, dim, Init::kOne);
  b.ln1_b = store.add(prefix + ".ln1.bias", 1, dim, Init::kZero);
  b.ln2_g = store.add(prefix + ".ln2.gain", 1, dim, Init::kOne);
  b.ln2_b = store.add(prefix + ".ln2.bias", 1, dim, Init::kZero);
  for (int h = 0; h < heads; ++h) {
    const std::string hp = prefix + ".head" + std::to_string(h);
    b.w_q.push_back(store.add(hp + ".wq", dim, b.head_dim, Init::kUniformFanIn, dim));
    b.w_k.push_back(store.add(hp + ".wk", dim, b.head_dim, Init::kUniformFanIn, dim));
    b.w_v.push_back(store.add(hp + ".wv", dim, b.head_dim, Init::kUniformFanIn, dim));
    b.w_o.push_back(store.add(hp + ".wo", b.head_dim, dim, Init::kUniformFanIn, dim));
  }
  b.b_o = store.add(prefix + ".bo", 1, dim, Init::kZero);
  b.w_ff1 = store.add(prefix + ".ff1.w", dim, ffn_hidden, Init::kUniformFanIn, dim);
  b.b_ff1 = store.add(prefix + ".ff1.b", 1, ffn_hidden, Init::kZero);
  b.w_ff2 = store.add(prefix + ".ff2.w", ffn_hidden, dim, Init::kUniformFanIn, ffn_hidden);
  b.b_ff2 = store.add(prefix + ".ff2.b", 1, dim, Init::kZero);
  return b;
}

// `key_mask` is an optional additive (1 x seq) row of 0 / -1e9 applied to
// attention scores so padded keys receive no weight.
template <typename S>
ad::Var<S> run_transformer_block(ad::Tape<S>& tape, const ParamStore<S>& store,
                                 ParamBinding<S>& bind, const TransformerBlockIds& blk,
                                 ad::Var<S> x, ad::Var<S> key_mask = {}) {
  using ad::Var;
  const S inv_sqrt = S(1) / std::sqrt(static_cast<S>(blk.head_dim));
  Var<S> h = ad::layernorm_rows(x, bind.use(tape, store, blk.ln1_g),
                                bind.use(tape, store, blk.ln1_b));
  Var<S> attn_sum;
  for (int head = 0; head < blk.heads; ++head) {
    Var<S> q = ad::matmul(h, bind.use(tape, store, blk.w_q[head]));
    Var<S> k = ad::matmul(h, bind.use(tape, store, blk.w_k[head]));
    Var<S> v = ad::matmul(h, bind.use(tape, store, blk.w_v[head]));
    Var<S> scores = ad::scale(ad::matmul_nt(q, k), inv_sqrt);
    if (key_mask.valid()) scores = ad::add_rowvec(scores, key_mask);
    Var<S> probs = ad::softmax_rows(scores);
    Var<S> ctx = ad::matmul(probs, v);
    Var<S> proj = ad::matmul(ctx, bind.use(tape, store, blk.w_o[head]));
    attn_sum = head == 0 ? proj : ad::add(attn_sum, proj);
  }
  attn_sum = ad::add_rowvec(attn_sum, bind.use(tape, store, blk.b_o));
  x = ad::add(x, attn_sum);

  Var<S> h2 = ad::layernorm_rows(x, bind.use(tape, store, blk.ln2_g),
                                 bind.use(tape, store, blk.ln2_b));
  Var<S> ff = ad::add_rowvec(ad::matmul(h2, bind.use(tape, store, blk.w_ff1)),
                             bind.use(tape, store, blk.b_ff1));
  ff = ad::gelu(ff);
  ff = ad::add_rowvec(ad::matmul(ff, bind.use(tape, store, blk.w_ff2)),
                      bind.use(tape, store, blk.b_ff2));
  return ad::add(x, ff);
}

}  // namespace posetext
