#include "roa/network.hpp"

#include <charconv>
#include <sstream>

#include "roa/errors.hpp"

namespace roa {

ScaleMode parse_scale_mode(std::string_view text) {
  if (text == "same_scale") return ScaleMode::kSameScale;
  if (text == "fpn_feature") return ScaleMode::kFpnFeature;
  if (text == "multi_scale") return ScaleMode::kMultiScale;
  throw InvalidArgument("scale mode must be same_scale, fpn_feature or multi_scale, got '" + std::string(text) + "'");
}

std::string_view to_string(ScaleMode mode) {
  switch (mode) {
    case ScaleMode::kSameScale:
      return "same_scale";
    case ScaleMode::kFpnFeature:
      return "fpn_feature";
    case ScaleMode::kMultiScale:
      return "multi_scale";
  }
  return "?";
}

void ModelConfig::validate() const {
  if (input_height < 32 || input_width < 32 || input_height % 32 != 0 || input_width % 32 != 0) {
    throw InvalidArgument("input size must be a positive multiple of 32, got " + std::to_string(input_height) + "x" +
                          std::to_string(input_width));
  }
  if (base_channels < 1 || fpn_channels < 1) throw InvalidArgument("channel counts must be positive");
  lkb().validate();
}

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

template <typename Int>
Int parse_int(const std::string& v, const std::string& key, int line) {
  Int out{};
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) {
    throw ParseError("expected an integer, got '" + v + "'", line, key);
  }
  return out;
}

bool parse_bool(const std::string& v, const std::string& key, int line) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ParseError("expected true or false, got '" + v + "'", line, key);
}

}  // namespace

std::string ModelConfig::to_text() const {
  std::ostringstream out;
  out << "input_height=" << input_height << "\n"
      << "input_width=" << input_width << "\n"
      << "base_channels=" << base_channels << "\n"
      << "fpn_channels=" << fpn_channels << "\n"
      << "roa_channels=" << roa_channels << "\n"
      << "kernel_size=" << kernel_size << "\n"
      << "se_reduction=" << se_reduction << "\n"
      << "aspp_dilations=";
  for (std::size_t i = 0; i < aspp_dilations.size(); ++i) out << (i ? "," : "") << aspp_dilations[i];
  out << "\n"
      << "scale_mode=" << to_string(scale_mode) << "\n"
      << "region_type=" << to_string(region_type) << "\n"
      << "shared_lkb=" << (shared_lkb ? "true" : "false") << "\n"
      << "residual_attention=" << (residual_attention ? "true" : "false") << "\n"
      << "seed=" << seed << "\n";
  return out.str();
}

ModelConfig ModelConfig::from_text(std::string_view text) {
  ModelConfig cfg;
  std::istringstream in{std::string(text)};
  std::string raw;
  int line = 0;
  while (std::getline(in, raw)) {
    ++line;
    const std::string l = trim(raw.substr(0, raw.find('#')));
    if (l.empty()) continue;
    const auto eq = l.find('=');
    if (eq == std::string::npos) throw ParseError("expected key=value", line, "");
    const std::string key = trim(l.substr(0, eq)), value = trim(l.substr(eq + 1));
    try {
      if (key == "input_height") cfg.input_height = parse_int<Index>(value, key, line);
      else if (key == "input_width") cfg.input_width = parse_int<Index>(value, key, line);
      else if (key == "base_channels") cfg.base_channels = parse_int<Index>(value, key, line);
      else if (key == "fpn_channels") cfg.fpn_channels = parse_int<Index>(value, key, line);
      else if (key == "roa_channels") cfg.roa_channels = parse_int<Index>(value, key, line);
      else if (key == "kernel_size") cfg.kernel_size = parse_int<Index>(value, key, line);
      else if (key == "se_reduction") cfg.se_reduction = parse_int<Index>(value, key, line);
      else if (key == "aspp_dilations") {
        cfg.aspp_dilations.clear();
        std::istringstream parts(value);
        std::string part;
        while (std::getline(parts, part, ',')) cfg.aspp_dilations.push_back(parse_int<Index>(trim(part), key, line));
      } else if (key == "scale_mode") cfg.scale_mode = parse_scale_mode(value);
      else if (key == "region_type") cfg.region_type = parse_region_type(value);
      else if (key == "shared_lkb") cfg.shared_lkb = parse_bool(value, key, line);
      else if (key == "residual_attention") cfg.residual_attention = parse_bool(value, key, line);
      else if (key == "seed") cfg.seed = parse_int<std::uint64_t>(value, key, line);
      else throw ParseError("unknown key", line, key);
    } catch (const InvalidArgument& e) {
      throw ParseError(e.what(), line, key);
    }
  }
  return cfg;
}

template <Real T>
FeaturePyramid<T> backbone_forward(Scope<T>& s, const Var<T>& image, const ModelConfig& cfg) {
  const auto& shape = image.shape();
  if (shape.size() != 4 || shape[1] != 3 || shape[2] % 32 != 0 || shape[3] % 32 != 0) {
    throw ShapeMismatch("backbone expects N x 3 x H x W with H, W multiples of 32, got " + to_string(shape));
  }
  FeaturePyramid<T> pyr;
  Var<T> x = image;
  for (int stage = 0; stage < 4; ++stage) {
    const std::string name = "stage" + std::to_string(stage);
    Scope<T> conv = s.sub(name + ".conv"), norm = s.sub(name + ".norm"), block = s.sub(name + ".block");
    const Index channels = cfg.base_channels << stage;
    const ConvGeometry geom = stage == 0 ? ConvGeometry{4, 2, 1} : ConvGeometry{2, 1, 1};
    x = relu(norm_layer(norm, conv_layer(conv, x, channels, stage == 0 ? 5 : 3, geom, false)));
    x = basic_block_forward(block, x, 3);
    pyr.levels[static_cast<std::size_t>(stage)] = x;
  }
  return pyr;
}

template <Real T>
Var<T> resample_to_output(const Var<T>& x, int level) {
  switch (level) {
    case 0:
      return avg_downsample(x, 4);
    case 1:
      return avg_downsample(x, 2);
    case 2:
      return x;
    case 3:
      return bilinear_upsample(x, 2);
    default:
      throw InvalidArgument("pyramid level must be 0..3");
  }
}

template <Real T>
Var<T> fpn_forward(Scope<T>& s, const FeaturePyramid<T>& pyr, const ModelConfig& cfg) {
  Var<T> fused;
  for (int level = 0; level < 4; ++level) {
    Scope<T> lateral = s.sub("lateral" + std::to_string(level));
    const Var<T> lat = conv_layer(lateral, pyr.levels[static_cast<std::size_t>(level)], cfg.fpn_channels, 1, {}, true);
    const Var<T> r = resample_to_output(lat, level);
    fused = fused.valid() ? add(fused, r) : r;
  }
  Scope<T> out = s.sub("out");
  return conv_layer(out, fused, cfg.fpn_channels, 3, {1, 1, 1}, true);
}

template <Real T>
Var<T> roa_forward(Scope<T>& s, const FeaturePyramid<T>& pyr, const Var<T>& fpn_out, const ModelConfig& cfg) {
  const LkbConfig lkb = cfg.lkb();
  auto branch = [&](const Var<T>& src, const std::string& name) {
    Scope<T> proj = s.sub("proj_" + name);
    Scope<T> block = s.sub(cfg.shared_lkb ? std::string("lkb") : "lkb_" + name);
    return lkb_forward(block, conv_layer(proj, src, cfg.roa_channels, 1, {}, true), lkb);
  };
  Var<T> sum_map;
  switch (cfg.scale_mode) {
    case ScaleMode::kMultiScale:
      for (int level = 0; level < 4; ++level) {
        const auto r = resample_to_output(branch(pyr.levels[static_cast<std::size_t>(level)],
                                                 "level" + std::to_string(level)),
                                          level);
        sum_map = sum_map.valid() ? add(sum_map, r) : r;
      }
      break;
    case ScaleMode::kSameScale:
      sum_map = branch(pyr.levels[2], "level2");
      break;
    case ScaleMode::kFpnFeature:
      sum_map = branch(fpn_out, "fpn");
      break;
  }
  // Bias starts at one so the terminal relu is active everywhere at init;
  // from zero a whole map can start (and stay) dead.
  Scope<T> head = s.sub("head");
  return relu(conv_layer(head, sum_map, 1, 1, {}, true, Init::kFanIn, Init::kOne));
}

template <Real T>
Var<T> apply_attention(const Var<T>& features, const Var<T>& roa, bool residual) {
  const auto &f = features.shape(), &r = roa.shape();
  if (f.size() != 4 || r.size() != 4 || r[0] != f[0] || r[1] != 1 || r[2] != f[2] || r[3] != f[3]) {
    throw ShapeMismatch("attention map " + to_string(r) + " does not fit features " + to_string(f));
  }
  return mul(features, residual ? add_scalar(roa, T(1)) : roa);
}

template <Real T>
ForwardResult<T> full_forward(Scope<T>& s, const Var<T>& image, const Var<T>& labels, const ModelConfig& cfg,
                              Reduction reduction) {
  ForwardResult<T> out;
  Scope<T> bb = s.sub("backbone"), fpn = s.sub("fpn"), roa = s.sub("roa");
  out.pyramid = backbone_forward(bb, image, cfg);
  out.fpn_out = fpn_forward(fpn, out.pyramid, cfg);
  out.roa_pred = roa_forward(roa, out.pyramid, out.fpn_out, cfg);
  out.features = apply_attention(out.fpn_out, out.roa_pred, cfg.residual_attention);
  if (labels.valid()) out.l_roa = l1_loss(out.roa_pred, labels, reduction);
  return out;
}

#define ROA_INSTANTIATE(T)                                                                                   \
  template FeaturePyramid<T> backbone_forward(Scope<T>&, const Var<T>&, const ModelConfig&);                 \
  template Var<T> resample_to_output(const Var<T>&, int);                                                    \
  template Var<T> fpn_forward(Scope<T>&, const FeaturePyramid<T>&, const ModelConfig&);                      \
  template Var<T> roa_forward(Scope<T>&, const FeaturePyramid<T>&, const Var<T>&, const ModelConfig&);       \
  template Var<T> apply_attention(const Var<T>&, const Var<T>&, bool);                                       \
  template ForwardResult<T> full_forward(Scope<T>&, const Var<T>&, const Var<T>&, const ModelConfig&, Reduction);

ROA_INSTANTIATE(float)
ROA_INSTANTIATE(double)

}  // namespace roa
