#include "roa/scene.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>
#include <map>
#include <sstream>

#include <Eigen/LU>
#include <Eigen/SVD>
#include <json.hpp>

#include "roa/errors.hpp"
#include "roa/random.hpp"

namespace roa {

using nlohmann::json;

namespace {

constexpr std::string_view kFormat = "roa-scene";
constexpr int kVersion = 1;

// Character iterator that counts the newlines it has stepped over, so the SAX
// handler below knows which line the lexer is on.
struct LineCountingIterator {
  using iterator_category = std::input_iterator_tag;
  using value_type = char;
  using difference_type = std::ptrdiff_t;
  using pointer = const char*;
  using reference = const char&;

  const char* p = nullptr;
  int* newlines = nullptr;

  reference operator*() const { return *p; }
  LineCountingIterator& operator++() {
    if (*p == '\n') ++*newlines;
    ++p;
    return *this;
  }
  LineCountingIterator operator++(int) {
    auto old = *this;
    ++*this;
    return old;
  }
  bool operator==(const LineCountingIterator& o) const { return p == o.p; }
  bool operator!=(const LineCountingIterator& o) const { return p != o.p; }
};

int line_of_offset(std::string_view text, std::size_t offset) {
  offset = std::min(offset, text.size());
  return 1 + static_cast<int>(std::count(text.begin(), text.begin() + static_cast<std::ptrdiff_t>(offset), '\n'));
}

// Builds the DOM through nlohmann's own handler and records, for each object
// key and each array element that opens a container, the line it starts on.
class LocatingSax {
 public:
  LocatingSax(json& root, std::string_view text, const int* newlines)
      : dom_(root, false), text_(text), newlines_(newlines) {}

  std::map<std::string, int> lines;

  bool null() { return next_value(), dom_.null(); }
  bool boolean(bool v) { return next_value(), dom_.boolean(v); }
  bool number_integer(json::number_integer_t v) { return next_value(), dom_.number_integer(v); }
  bool number_unsigned(json::number_unsigned_t v) { return next_value(), dom_.number_unsigned(v); }
  bool number_float(json::number_float_t v, const json::string_t& s) { return next_value(), dom_.number_float(v, s); }
  bool string(json::string_t& v) { return next_value(), dom_.string(v); }
  bool binary(json::binary_t& v) { return next_value(), dom_.binary(v); }
  bool start_object(std::size_t n) {
    open(false);
    return dom_.start_object(n);
  }
  bool end_object() {
    frames_.pop_back();
    return dom_.end_object();
  }
  bool start_array(std::size_t n) {
    open(true);
    return dom_.start_array(n);
  }
  bool end_array() {
    frames_.pop_back();
    return dom_.end_array();
  }
  bool key(json::string_t& k) {
    const Frame& top = frames_.back();
    key_path_ = top.path.empty() ? k : top.path + "." + k;
    lines[key_path_] = line();
    return dom_.key(k);
  }
  bool parse_error(std::size_t position, const std::string& /*last_token*/, const nlohmann::json::exception& ex) {
    std::string what = ex.what();
    // Drop nlohmann's "[json.exception.parse_error.101] parse error at line
    // L, column C: " preamble; the line is reported separately.
    if (auto pos = what.find(": "); pos != std::string::npos && what.rfind("[json.exception", 0) == 0) {
      what = what.substr(pos + 2);
    }
    throw ParseError("malformed JSON: " + what, line_of_offset(text_, position > 0 ? position - 1 : 0), "");
  }

 private:
  struct Frame {
    bool array = false;
    std::size_t index = 0;
    std::string path;
  };

  int line() const { return *newlines_ + 1; }

  std::string next_value() {
    if (frames_.empty()) return "";
    Frame& top = frames_.back();
    if (!top.array) return key_path_;
    return top.path + "[" + std::to_string(top.index++) + "]";
  }

  void open(bool array) {
    const bool in_array = !frames_.empty() && frames_.back().array;
    std::string path = next_value();
    if (in_array) lines[path] = line();
    frames_.push_back({array, 0, std::move(path)});
  }

  nlohmann::detail::json_sax_dom_parser<json> dom_;
  std::string_view text_;
  const int* newlines_;
  std::vector<Frame> frames_;
  std::string key_path_;
};

class Reader {
 public:
  explicit Reader(const std::map<std::string, int>& lines) : lines_(lines) {}

  [[noreturn]] void fail(const std::string& path, const std::string& what) const {
    throw ParseError(what, line_for(path), path);
  }

  int line_for(std::string path) const {
    while (true) {
      if (auto it = lines_.find(path); it != lines_.end()) return it->second;
      const auto cut = path.find_last_of(".[");
      if (cut == std::string::npos || cut == 0) return 0;
      path.resize(cut);
    }
  }

  const json& field(const json& obj, const std::string& path, const char* key) const {
    if (!obj.is_object()) fail(path, "expected an object");
    auto it = obj.find(key);
    if (it == obj.end()) fail(join(path, key), std::string("missing required field '") + key + "'");
    return *it;
  }

  double number(const json& v, const std::string& path) const {
    if (!v.is_number()) fail(path, "expected a number");
    const double d = v.get<double>();
    if (!std::isfinite(d)) fail(path, "number is not finite");
    return d;
  }

  int integer(const json& v, const std::string& path) const {
    if (!v.is_number_integer()) fail(path, "expected an integer");
    const auto i = v.get<std::int64_t>();
    if (i < 1 || i > (1 << 20)) fail(path, "integer out of range");
    return static_cast<int>(i);
  }

  const json& array(const json& v, const std::string& path, std::size_t expected) const {
    if (!v.is_array()) fail(path, "expected an array");
    if (expected != 0 && v.size() != expected) {
      fail(path, "expected " + std::to_string(expected) + " elements, got " + std::to_string(v.size()));
    }
    return v;
  }

  Eigen::Vector3d vec3(const json& v, const std::string& path) const {
    array(v, path, 3);
    Eigen::Vector3d out;
    for (int i = 0; i < 3; ++i) out[i] = number(v[i], index(path, i));
    return out;
  }

  static std::string join(const std::string& path, const char* key) {
    return path.empty() ? key : path + "." + key;
  }
  static std::string index(const std::string& path, std::size_t i) {
    return path + "[" + std::to_string(i) + "]";
  }

 private:
  const std::map<std::string, int>& lines_;
};

Eigen::Matrix3d checked_rotation(const Eigen::Matrix3d& r, const std::string& path) {
  const double err = (r.transpose() * r - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff();
  if (err > 1e-3 || r.determinant() <= 0) {
    throw InvalidRotation("rotation at '" + path + "' is not a proper rotation (max |R^T R - I| = " +
                          std::to_string(err) + ", det = " + std::to_string(r.determinant()) + ")");
  }
  if (err <= 1e-12) return r;
  Eigen::JacobiSVD<Eigen::Matrix3d> svd(r, Eigen::ComputeFullU | Eigen::ComputeFullV);
  return svd.matrixU() * svd.matrixV().transpose();
}

Camera read_camera(const Reader& rd, const json& v, const std::string& path) {
  Camera cam;
  if (auto it = v.is_object() ? v.find("name") : v.end(); v.is_object() && it != v.end()) {
    if (!it->is_string()) rd.fail(Reader::join(path, "name"), "expected a string");
    cam.name = it->get<std::string>();
  }
  const std::string ip = Reader::join(path, "intrinsics");
  const json& in = rd.field(v, path, "intrinsics");
  Intrinsics& intr = cam.intrinsics;
  intr.fx = rd.number(rd.field(in, ip, "fx"), Reader::join(ip, "fx"));
  intr.fy = rd.number(rd.field(in, ip, "fy"), Reader::join(ip, "fy"));
  intr.cx = rd.number(rd.field(in, ip, "cx"), Reader::join(ip, "cx"));
  intr.cy = rd.number(rd.field(in, ip, "cy"), Reader::join(ip, "cy"));
  intr.width = rd.integer(rd.field(in, ip, "width"), Reader::join(ip, "width"));
  intr.height = rd.integer(rd.field(in, ip, "height"), Reader::join(ip, "height"));
  try {
    intr.validate();
  } catch (const InvalidArgument& e) {
    rd.fail(ip, e.what());
  }

  const std::string ep = Reader::join(path, "extrinsics");
  const json& ex = rd.field(v, path, "extrinsics");
  const std::string rp = Reader::join(ep, "rotation");
  const json& rot = rd.array(rd.field(ex, ep, "rotation"), rp, 3);
  Eigen::Matrix3d r;
  for (int i = 0; i < 3; ++i) r.row(i) = rd.vec3(rot[i], Reader::index(rp, i)).transpose();
  cam.extrinsics.rotation = checked_rotation(r, rp);
  cam.extrinsics.translation = rd.vec3(rd.field(ex, ep, "translation"), Reader::join(ep, "translation"));
  return cam;
}

Box3D read_box(const Reader& rd, const json& v, const std::string& path) {
  Box3D box;
  box.center = rd.vec3(rd.field(v, path, "center"), Reader::join(path, "center"));
  box.size = rd.vec3(rd.field(v, path, "size"), Reader::join(path, "size"));
  box.yaw = rd.number(rd.field(v, path, "yaw"), Reader::join(path, "yaw"));
  if (auto it = v.find("class"); it != v.end()) {
    if (!it->is_string()) rd.fail(Reader::join(path, "class"), "expected a string");
    box.category = it->get<std::string>();
  }
  try {
    box.validate();
  } catch (const InvalidArgument& e) {
    rd.fail(path, e.what());
  }
  return box;
}

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace

void Scene::validate() const {
  if (cameras.size() != kNumCameras) {
    throw InvalidArgument("a scene needs exactly 6 cameras, got " + std::to_string(cameras.size()));
  }
  for (const auto& c : cameras) {
    c.intrinsics.validate();
    c.extrinsics.validate();
  }
  for (const auto& b : boxes) b.validate();
}

std::vector<Scene> parse_scenes(std::string_view text) {
  json root;
  int newlines = 0;
  LocatingSax sax(root, text, &newlines);
  LineCountingIterator first{text.data(), &newlines}, last{text.data() + text.size(), &newlines};
  json::sax_parse(first, last, &sax);
  const Reader rd(sax.lines);

  if (!root.is_object()) rd.fail("", "document root must be an object");
  const json& format = rd.field(root, "", "format");
  if (!format.is_string() || format.get<std::string>() != kFormat) {
    rd.fail("format", "expected \"roa-scene\"");
  }
  const json& version = rd.field(root, "", "version");
  if (!version.is_number_integer() || version.get<std::int64_t>() != kVersion) {
    rd.fail("version", "unsupported version (expected 1)");
  }
  const json& scenes = rd.array(rd.field(root, "", "scenes"), "scenes", 0);

  std::vector<Scene> out;
  for (std::size_t si = 0; si < scenes.size(); ++si) {
    const std::string sp = Reader::index("scenes", si);
    const json& sv = scenes[si];
    Scene scene;
    const json& id = rd.field(sv, sp, "id");
    if (!id.is_string()) rd.fail(Reader::join(sp, "id"), "expected a string");
    scene.id = id.get<std::string>();

    const std::string cp = Reader::join(sp, "cameras");
    const json& cams = rd.field(sv, sp, "cameras");
    if (!cams.is_array()) rd.fail(cp, "expected an array");
    if (cams.size() != kNumCameras) {
      rd.fail(cp, "a scene needs exactly 6 cameras, got " + std::to_string(cams.size()));
    }
    for (std::size_t ci = 0; ci < cams.size(); ++ci) {
      scene.cameras.push_back(read_camera(rd, cams[ci], Reader::index(cp, ci)));
    }

    const std::string bp = Reader::join(sp, "boxes");
    const json& boxes = rd.array(rd.field(sv, sp, "boxes"), bp, 0);
    for (std::size_t bi = 0; bi < boxes.size(); ++bi) {
      scene.boxes.push_back(read_box(rd, boxes[bi], Reader::index(bp, bi)));
    }
    out.push_back(std::move(scene));
  }
  return out;
}

std::vector<Scene> parse_scene_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open scene file " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_scenes(ss.str());
}

std::string write_scenes(const std::vector<Scene>& scenes) {
  auto vec = [](const Eigen::Vector3d& v) { return json::array({v.x(), v.y(), v.z()}); };
  json doc = {{"format", kFormat}, {"version", kVersion}, {"scenes", json::array()}};
  for (const auto& s : scenes) {
    json js = {{"id", s.id}, {"cameras", json::array()}, {"boxes", json::array()}};
    for (const auto& c : s.cameras) {
      const auto& i = c.intrinsics;
      const auto& r = c.extrinsics.rotation;
      json rot = json::array();
      for (int row = 0; row < 3; ++row) rot.push_back(vec(r.row(row).transpose()));
      js["cameras"].push_back({{"name", c.name},
                               {"intrinsics",
                                {{"fx", i.fx}, {"fy", i.fy}, {"cx", i.cx}, {"cy", i.cy}, {"width", i.width},
                                 {"height", i.height}}},
                               {"extrinsics", {{"rotation", rot}, {"translation", vec(c.extrinsics.translation)}}}});
    }
    for (const auto& b : s.boxes) {
      json jb = {{"center", vec(b.center)}, {"size", vec(b.size)}, {"yaw", b.yaw}};
      if (!b.category.empty()) jb["class"] = b.category;
      js["boxes"].push_back(std::move(jb));
    }
    doc["scenes"].push_back(std::move(js));
  }
  return doc.dump(2) + "\n";
}

void write_scene_file(const std::filesystem::path& path, const std::vector<Scene>& scenes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << write_scenes(scenes);
  if (!out) throw IoError("failed writing " + path.string());
}

std::vector<Camera> default_rig() {
  static constexpr const char* kNames[kNumCameras] = {"CAM_FRONT",     "CAM_FRONT_LEFT", "CAM_BACK_LEFT",
                                                       "CAM_BACK",      "CAM_BACK_RIGHT", "CAM_FRONT_RIGHT"};
  std::vector<Camera> rig;
  for (int i = 0; i < kNumCameras; ++i) {
    const double theta = i * M_PI / 3.0;
    const Eigen::Vector3d forward(std::cos(theta), std::sin(theta), 0.0);
    const Eigen::Vector3d right(std::sin(theta), -std::cos(theta), 0.0);
    const Eigen::Vector3d down(0.0, 0.0, -1.0);
    Camera cam;
    cam.name = kNames[i];
    cam.intrinsics = {560.0, 560.0, 352.0, 128.0, 704, 256};
    cam.extrinsics.rotation.row(0) = right.transpose();
    cam.extrinsics.rotation.row(1) = down.transpose();
    cam.extrinsics.rotation.row(2) = forward.transpose();
    const Eigen::Vector3d position = 0.8 * forward + Eigen::Vector3d(0.0, 0.0, 1.5);
    cam.extrinsics.translation = -cam.extrinsics.rotation * position;
    rig.push_back(std::move(cam));
  }
  return rig;
}

Scene gen_synthetic(std::uint64_t seed, int n_boxes) {
  if (n_boxes < 0) throw InvalidArgument("n_boxes must be non-negative");
  Rng rng(seed);
  Scene scene;
  scene.id = "synthetic-" + std::to_string(seed);
  scene.cameras = default_rig();
  for (int b = 0; b < n_boxes; ++b) {
    double r = 0.0;
    while (r < 3.0) r = 50.0 * std::sqrt(rng.uniform());
    const double phi = rng.uniform(0.0, 2.0 * M_PI);
    Box3D box;
    const double pick = rng.uniform();
    if (pick < 0.6) {
      box.category = "car";
      box.size = {rng.uniform(3.9, 4.9), rng.uniform(1.7, 2.0), rng.uniform(1.4, 1.8)};
    } else if (pick < 0.75) {
      box.category = "truck";
      box.size = {rng.uniform(6.0, 10.0), rng.uniform(2.3, 2.8), rng.uniform(2.8, 3.8)};
    } else {
      box.category = "pedestrian";
      box.size = {rng.uniform(0.5, 0.9), rng.uniform(0.5, 0.9), rng.uniform(1.5, 1.9)};
    }
    box.center = {r * std::cos(phi), r * std::sin(phi), box.size.z() / 2.0};
    box.yaw = rng.uniform(-M_PI, M_PI);
    scene.boxes.push_back(std::move(box));
  }
  return scene;
}

Tensor<float> render_camera(const Scene& scene, int camera_index, int height, int width) {
  if (camera_index < 0 || camera_index >= static_cast<int>(scene.cameras.size())) {
    throw InvalidArgument("camera index " + std::to_string(camera_index) + " out of range");
  }
  const Camera& cam = scene.cameras[static_cast<std::size_t>(camera_index)];
  const double factor = static_cast<double>(width) / cam.intrinsics.width;
  const Intrinsics intr = cam.intrinsics.scaled(factor);
  if (intr.width != width || intr.height != height) {
    throw InvalidArgument("render size " + std::to_string(height) + "x" + std::to_string(width) +
                          " does not preserve the camera aspect ratio");
  }

  Tensor<float> img({3, height, width});
  const Index plane = static_cast<Index>(height) * width;
  Rng rng(fnv1a(scene.id) ^ (0x9e3779b97f4a7c15ULL * static_cast<std::uint64_t>(camera_index + 1)));
  for (int v = 0; v < height; ++v) {
    const bool sky = v < intr.cy;
    const double t = sky ? v / intr.cy : (v - intr.cy) / (height - intr.cy);
    const float base[3] = {sky ? static_cast<float>(0.55 + 0.2 * t) : static_cast<float>(0.35 - 0.1 * t),
                           sky ? static_cast<float>(0.7 + 0.15 * t) : static_cast<float>(0.35 - 0.1 * t),
                           sky ? 0.9f : static_cast<float>(0.33 - 0.1 * t)};
    for (int u = 0; u < width; ++u) {
      const float noise = static_cast<float>(rng.uniform(-0.04, 0.04));
      for (int ch = 0; ch < 3; ++ch) img[ch * plane + v * width + u] = base[ch] + noise;
    }
  }

  struct Painted {
    double depth;
    Rect2D rect;
    const Box3D* box;
  };
  std::vector<Painted> order;
  for (const auto& box : scene.boxes) {
    const auto rect = project_box(box, cam.extrinsics, intr);
    if (!rect) continue;
    const double depth = (cam.extrinsics.rotation * box.center + cam.extrinsics.translation).z();
    order.push_back({depth, *rect, &box});
  }
  std::stable_sort(order.begin(), order.end(), [](const Painted& a, const Painted& b) { return a.depth > b.depth; });
  for (const auto& p : order) {
    float color[3] = {0.6f, 0.6f, 0.6f};
    if (p.box->category == "car") {
      color[0] = 0.85f, color[1] = 0.2f, color[2] = 0.15f;
    } else if (p.box->category == "truck") {
      color[0] = 0.2f, color[1] = 0.35f, color[2] = 0.85f;
    } else if (p.box->category == "pedestrian") {
      color[0] = 0.95f, color[1] = 0.85f, color[2] = 0.2f;
    }
    const int u0 = static_cast<int>(std::floor(p.rect.u_min)), u1 = static_cast<int>(std::ceil(p.rect.u_max));
    const int v0 = static_cast<int>(std::floor(p.rect.v_min)), v1 = static_cast<int>(std::ceil(p.rect.v_max));
    for (int v = std::max(v0, 0); v < std::min(v1, height); ++v) {
      const float shade = 1.0f - 0.35f * static_cast<float>(v - v0) / static_cast<float>(std::max(v1 - v0, 1));
      for (int u = std::max(u0, 0); u < std::min(u1, width); ++u) {
        for (int ch = 0; ch < 3; ++ch) img[ch * plane + v * width + u] = color[ch] * shade;
      }
    }
  }
  for (auto& x : img.data()) x = std::clamp(x, 0.0f, 1.0f);
  return img;
}

}  // namespace roa
