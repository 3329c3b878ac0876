#include "mccl/gcam.hpp"

#include "mccl/error.hpp"
#include "mccl/ops.hpp"
#include "mccl/rng.hpp"

namespace mccl {

std::vector<int> make_split_perm(int s, std::uint64_t seed) {
  Rng rng(derive_seed(seed, tag_hash("gcam/shuffle")));
  return rng.permutation(s);
}

namespace {

void check_even(int s) {
  if (s % 2 != 0) {
    throw ContractError("split_shuffle: group size " + std::to_string(s) +
                        " must be even");
  }
}

std::vector<int> inverse_perm(const std::vector<int>& perm) {
  std::vector<int> inv(perm.size());
  for (std::size_t i = 0; i < perm.size(); ++i)
    inv[static_cast<std::size_t>(perm[i])] = static_cast<int>(i);
  return inv;
}

}  // namespace

template <typename S>
std::pair<Tensor<S>, Tensor<S>> split_shuffle(const Tensor<S>& feat,
                                              const std::vector<int>& perm) {
  const int s = feat.dim(0);
  check_even(s);
  if (static_cast<int>(perm.size()) != s) {
    throw ContractError("split_shuffle: permutation size mismatch");
  }
  auto shuffled = permute_batch(feat, perm);
  auto halves = split(shuffled, 0, 2);
  return {halves[0], halves[1]};
}

template <typename S>
std::pair<Tensor<S>, Tensor<S>> split_shuffle(const Tensor<S>& feat,
                                              std::uint64_t seed) {
  check_even(feat.dim(0));
  return split_shuffle(feat, make_split_perm(feat.dim(0), seed));
}

template <typename S>
std::pair<Tensor<S>, Tensor<S>> nonlocal_consensus(const Tensor<S>& a,
                                                   const Tensor<S>& b,
                                                   ParamStore<S>& ps) {
  if (a.shape() != b.shape()) {
    throw ShapeError("nonlocal_consensus: halves " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
  }
  auto x = concat<S>({a, b}, 0);
  const int s = x.dim(0), h = x.dim(2), w = x.dim(3);

  auto project = [&](const char* name) {
    auto y = conv2d(x, ps.p(std::string("gcam/") + name + ".w"),
                    ps.p(std::string("gcam/") + name + ".b"), 1, 0);
    return flatten_positions(y);  // [S*H*W, C/2]
  };
  auto q = project("q");
  auto k = project("k");
  auto v = project("v");

  auto affinity = softmax(matmul(q, transpose2d(k)), 1);
  auto attended = unflatten_positions(matmul(affinity, v), s, h, w);
  auto projected = conv2d(attended, ps.p("gcam/o.w"), ps.p("gcam/o.b"), 1, 0);
  auto out = add(x, projected);

  auto halves = split(out, 0, 2);
  return {halves[0], halves[1]};
}

template <typename S>
Tensor<S> depthwise_fuse(const Tensor<S>& orig, const Tensor<S>& cons) {
  if (orig.shape() != cons.shape()) {
    throw ShapeError("depthwise_fuse: " + shape_str(orig.shape()) + " vs " +
                     shape_str(cons.shape()));
  }
  // pooled consensus kernel: per-channel mean over images and space
  auto kernel = mean_axis0(global_avg_pool(cons));  // [C]
  auto fused = depthwise_conv2d(orig, kernel);
  return concat<S>({fused, cons}, 1);
}

namespace {

// mean of feat_out over a subset of image rows -> [C'] vector
template <typename S>
Tensor<S> pool_rows(const Tensor<S>& feat_out, const std::vector<int>& rows) {
  std::vector<Tensor<S>> picked;
  picked.reserve(rows.size());
  for (int r : rows) picked.push_back(slice(feat_out, 0, r, 1));
  return mean_axis0(global_avg_pool(concat(picked, 0)));
}

}  // namespace

template <typename S>
GroupConsensus<S> gcam_forward(const GroupFeature<S>& g, ParamStore<S>& ps,
                               const std::vector<int>& perm) {
  const int s = g.feat.dim(0);
  check_even(s);

  auto [half_a, half_b] = split_shuffle(g.feat, perm);
  auto [a_out, b_out] = nonlocal_consensus(half_a, half_b, ps);
  auto cons = permute_batch(concat<S>({a_out, b_out}, 0), inverse_perm(perm));

  GroupConsensus<S> out;
  out.class_id = g.class_id;
  out.feat_out = depthwise_fuse(g.feat, cons);
  out.half_a.assign(perm.begin(), perm.begin() + s / 2);
  out.half_b.assign(perm.begin() + s / 2, perm.end());
  out.vec_a = pool_rows(out.feat_out, out.half_a);
  out.vec_b = pool_rows(out.feat_out, out.half_b);
  return out;
}

template <typename S>
GroupConsensus<S> gcam_forward(const GroupFeature<S>& g, ParamStore<S>& ps,
                               std::uint64_t seed) {
  return gcam_forward(g, ps, make_split_perm(g.feat.dim(0), seed));
}

#define MCCL_INSTANTIATE_GCAM(S)                                                   \
  template std::pair<Tensor<S>, Tensor<S>> split_shuffle<S>(const Tensor<S>&,      \
                                                            const std::vector<int>&); \
  template std::pair<Tensor<S>, Tensor<S>> split_shuffle<S>(const Tensor<S>&,      \
                                                            std::uint64_t);        \
  template std::pair<Tensor<S>, Tensor<S>> nonlocal_consensus<S>(                  \
      const Tensor<S>&, const Tensor<S>&, ParamStore<S>&);                         \
  template Tensor<S> depthwise_fuse<S>(const Tensor<S>&, const Tensor<S>&);        \
  template GroupConsensus<S> gcam_forward<S>(const GroupFeature<S>&,               \
                                             ParamStore<S>&, const std::vector<int>&); \
  template GroupConsensus<S> gcam_forward<S>(const GroupFeature<S>&,               \
                                             ParamStore<S>&, std::uint64_t);

MCCL_INSTANTIATE_GCAM(float)
MCCL_INSTANTIATE_GCAM(double)

#undef MCCL_INSTANTIATE_GCAM

}  // namespace mccl
