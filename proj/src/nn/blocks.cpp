#include "roa/blocks.hpp"

#include "roa/errors.hpp"

namespace roa {

void LkbConfig::validate() const {
  if (channels < 1) throw InvalidArgument("LKB channels must be positive");
  if (kernel_size < 1 || kernel_size % 2 == 0) {
    throw InvalidArgument("kernel size must be odd and positive, got " + std::to_string(kernel_size));
  }
  if (se_reduction < 1 || channels % se_reduction != 0) {
    throw InvalidArgument("SE reduction " + std::to_string(se_reduction) + " does not divide " +
                          std::to_string(channels) + " channels");
  }
  if (aspp_dilations.empty()) throw InvalidArgument("ASPP needs at least one dilation");
  for (Index d : aspp_dilations) {
    if (d < 1) throw InvalidArgument("ASPP dilations must be positive");
  }
}

namespace {

template <Real T>
void expect_channels(const Var<T>& x, Index channels, const char* block) {
  if (x.value().rank() != 4 || x.shape()[1] != channels) {
    throw ShapeMismatch(std::string(block) + " expects N x " + std::to_string(channels) + " x H x W input, got " +
                        to_string(x.shape()));
  }
}

ConvGeometry same(Index kernel, Index dilation = 1) { return {1, dilation * (kernel - 1) / 2, dilation}; }

}  // namespace

template <Real T>
Var<T> conv_layer(Scope<T>& s, const Var<T>& x, Index out_channels, Index kernel, const ConvGeometry& geom,
                  bool with_bias, Init weight_init, Init bias_init) {
  const Index in = x.shape().at(1);
  const Var<T> w = s.param("weight", {out_channels, in, kernel, kernel}, weight_init);
  const Var<T> b = with_bias ? s.param("bias", {out_channels}, bias_init) : Var<T>{};
  return conv2d(x, w, b, geom);
}

template <Real T>
Var<T> norm_layer(Scope<T>& s, const Var<T>& x) {
  const Index c = x.shape().at(1);
  const Var<T> gamma = s.param("gamma", {c}, Init::kOne);
  const Var<T> beta = s.param("beta", {c}, Init::kZero);
  Tensor<T>& mean = s.buffer("running_mean", {c}, Init::kZero);
  Tensor<T>& var = s.buffer("running_var", {c}, Init::kOne);
  return batch_norm(x, gamma, beta, mean, var, BatchNormOptions{s.norm_mode()});
}

template <Real T>
Var<T> se_forward(Scope<T>& s, const Var<T>& x, Index reduction) {
  const Index n = x.shape().at(0), c = x.shape().at(1);
  if (reduction < 1 || c % reduction != 0) throw ShapeMismatch("SE reduction must divide the channel count");
  const Index hidden = c / reduction;
  Scope<T> fc1 = s.sub("fc1"), fc2 = s.sub("fc2");
  Var<T> z = reshape(global_avg_pool(x), {n, c});
  z = relu(fully_connected(z, fc1.param("weight", {hidden, c}, Init::kFanIn), fc1.param("bias", {hidden}, Init::kZero)));
  z = sigmoid(fully_connected(z, fc2.param("weight", {c, hidden}, Init::kFanIn), fc2.param("bias", {c}, Init::kZero)));
  return mul(x, reshape(z, {n, c, 1, 1}));
}

template <Real T>
Var<T> basic_block_forward(Scope<T>& s, const Var<T>& x, Index kernel_size) {
  if (kernel_size % 2 == 0) throw InvalidArgument("basic block kernel must be odd");
  const Index c = x.shape().at(1);
  Scope<T> c1 = s.sub("conv1"), n1 = s.sub("norm1"), c2 = s.sub("conv2"), n2 = s.sub("norm2");
  Var<T> y = relu(norm_layer(n1, conv_layer(c1, x, c, kernel_size, same(kernel_size), false)));
  y = norm_layer(n2, conv_layer(c2, y, c, kernel_size, same(kernel_size), false));
  return relu(add(y, x));
}

template <Real T>
Var<T> aspp_forward(Scope<T>& s, const Var<T>& x, const std::vector<Index>& dilations) {
  const Index n = x.shape().at(0), c = x.shape().at(1), h = x.shape().at(2), w = x.shape().at(3);
  auto branch = [&](const std::string& name, Index kernel, Index dilation) {
    Scope<T> conv = s.sub(name), norm = s.sub(name + "_norm");
    return relu(norm_layer(norm, conv_layer(conv, x, c, kernel, same(kernel, dilation), false)));
  };
  std::vector<Var<T>> parts;
  parts.push_back(branch("b0", 1, 1));
  for (std::size_t i = 0; i < dilations.size(); ++i) parts.push_back(branch("d" + std::to_string(i), 3, dilations[i]));
  Scope<T> pool = s.sub("pool");
  const Var<T> pooled = relu(conv_layer(pool, global_avg_pool(x), c, 1, {}, true));
  parts.push_back(expand(pooled, {n, c, h, w}));
  Scope<T> proj = s.sub("project"), proj_norm = s.sub("project_norm");
  return relu(norm_layer(proj_norm, conv_layer(proj, concat_channels(parts), c, 1, {}, false)));
}

template <Real T>
Var<T> dcn_forward(Scope<T>& s, const Var<T>& x, Index kernel_size) {
  if (kernel_size % 2 == 0) throw InvalidArgument("DCN kernel must be odd");
  const Index c = x.shape().at(1), k = kernel_size;
  Scope<T> off = s.sub("offset"), conv = s.sub("conv");
  const Var<T> offsets = conv_layer(off, x, 2 * k * k, k, same(k), true, Init::kZero);
  const Var<T> w = conv.param("weight", {c, c, k, k}, Init::kFanIn);
  const Var<T> b = conv.param("bias", {c}, Init::kZero);
  return deform_conv2d(x, offsets, w, b, same(k));
}

template <Real T>
Var<T> lkb_forward(Scope<T>& s, const Var<T>& x, const LkbConfig& cfg) {
  cfg.validate();
  expect_channels(x, cfg.channels, "LKB");
  Scope<T> se = s.sub("se"), b1 = s.sub("block1"), b2 = s.sub("block2"), aspp = s.sub("aspp"), dcn = s.sub("dcn");
  Var<T> y = se_forward(se, x, cfg.se_reduction);
  y = basic_block_forward(b1, y, cfg.kernel_size);
  y = basic_block_forward(b2, y, cfg.kernel_size);
  y = aspp_forward(aspp, y, cfg.aspp_dilations);
  return dcn_forward(dcn, y, cfg.kernel_size);
}

#define ROA_INSTANTIATE(T)                                                                                   \
  template Var<T> conv_layer(Scope<T>&, const Var<T>&, Index, Index, const ConvGeometry&, bool, Init, Init); \
  template Var<T> norm_layer(Scope<T>&, const Var<T>&);                                                      \
  template Var<T> se_forward(Scope<T>&, const Var<T>&, Index);                                               \
  template Var<T> basic_block_forward(Scope<T>&, const Var<T>&, Index);                                      \
  template Var<T> aspp_forward(Scope<T>&, const Var<T>&, const std::vector<Index>&);                         \
  template Var<T> dcn_forward(Scope<T>&, const Var<T>&, Index);                                              \
  template Var<T> lkb_forward(Scope<T>&, const Var<T>&, const LkbConfig&);

ROA_INSTANTIATE(float)
ROA_INSTANTIATE(double)

}  // namespace roa
