#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "cli.hpp"
#include "roa/tensor_io.hpp"

using namespace roa;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code;
  std::string out, err;
};

Run roa_cli(std::vector<std::string> args) {
  args.insert(args.begin(), "roa");
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() / ("roa_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  // Smallest model the CLI accepts, for quick training runs.
  std::string tiny_config() {
    const auto p = dir_ / "tiny.cfg";
    std::ofstream(p) << "# tiny\ninput_height=128\ninput_width=352\nbase_channels=4\nfpn_channels=8\n"
                        "roa_channels=4\nkernel_size=3\nse_reduction=2\naspp_dilations=1,2\n";
    return p.string();
  }

  fs::path dir_;
};

}  // namespace

TEST_F(CliTest, UsageErrorsExitTwo) {
  EXPECT_EQ(roa_cli({}).code, 2);
  EXPECT_EQ(roa_cli({"frobnicate"}).code, 2);
  EXPECT_EQ(roa_cli({"gen-labels", (dir_ / "missing.json").string(), "--out", dir_.string()}).code, 2);
  EXPECT_EQ(roa_cli({"train", "--steps", "1", "--scale-mode", "huge", "--out", dir_.string()}).code, 2);
  EXPECT_EQ(roa_cli({"--help"}).code, 0);
}

TEST_F(CliTest, GenLabelsOnEmptySceneWritesSixZeroMaps) {
  const auto scene = (dir_ / "empty.json").string();
  ASSERT_EQ(roa_cli({"gen-scene", scene, "--boxes", "0"}).code, 0);
  ASSERT_EQ(roa_cli({"gen-labels", scene, "--out", (dir_ / "labels").string()}).code, 0);
  int pgms = 0;
  for (const auto& e : fs::directory_iterator(dir_ / "labels")) {
    if (e.path().extension() != ".pgm") continue;
    ++pgms;
    const std::string bytes = slurp(e.path());
    const std::string header = "P5\n44 16\n255\n";
    ASSERT_EQ(bytes.substr(0, header.size()), header);
    EXPECT_EQ(bytes.substr(header.size()), std::string(16 * 44, '\0'));
  }
  EXPECT_EQ(pgms, 6);
}

TEST_F(CliTest, GenLabelsIsByteIdentical) {
  const auto scene = (dir_ / "s.json").string();
  ASSERT_EQ(roa_cli({"gen-scene", scene, "--seed", "11", "--count", "2"}).code, 0);
  for (const char* run : {"a", "b"})
    ASSERT_EQ(roa_cli({"gen-labels", scene, "--out", (dir_ / run).string(), "--region-type", "binary"}).code, 0);
  int files = 0;
  for (const auto& e : fs::directory_iterator(dir_ / "a")) {
    ++files;
    EXPECT_EQ(slurp(e.path()), slurp(dir_ / "b" / e.path().filename())) << e.path();
  }
  EXPECT_EQ(files, 24);
  const auto front = read_tensor<float>(dir_ / "a" / "1_CAM_FRONT.roat");
  for (float v : front.data()) EXPECT_TRUE(v == 0.0f || v == 1.0f);
  EXPECT_EQ(roa_cli({"gen-labels", scene, "--out", (dir_ / "c").string(), "--stride", "7"}).code, 2);
}

TEST_F(CliTest, TrainResumeForward) {
  const auto cfg = tiny_config();
  const auto ckpt = (dir_ / "ckpt").string();
  const std::vector<std::string> common{"--config", cfg, "--log-every", "0", "--seed", "3", "--schedule", "constant"};
  auto args = [&](std::vector<std::string> a) {
    a.insert(a.end(), common.begin(), common.end());
    return a;
  };
  ASSERT_EQ(roa_cli(args({"train", "--steps", "2", "--out", ckpt})).code, 0);
  ASSERT_EQ(roa_cli(args({"train", "--steps", "1", "--resume", ckpt, "--out", (dir_ / "resumed").string()})).code, 0);
  ASSERT_EQ(roa_cli(args({"train", "--steps", "3", "--out", (dir_ / "straight").string()})).code, 0);
  const std::string resumed = slurp(dir_ / "resumed" / "loss.csv");
  const std::string straight = slurp(dir_ / "straight" / "loss.csv");
  const auto last_line = straight.substr(straight.rfind('\n', straight.size() - 2) + 1);
  EXPECT_EQ(resumed, "step,l_roa,total\n" + last_line);
  EXPECT_EQ(last_line.substr(0, 2), "2,");

  const auto scene = (dir_ / "s.json").string();
  ASSERT_EQ(roa_cli({"gen-scene", scene, "--seed", "3"}).code, 0);
  const auto fwd = roa_cli({"forward", scene, "--checkpoint", ckpt, "--out", (dir_ / "pred").string()});
  ASSERT_EQ(fwd.code, 0) << fwd.err;
  EXPECT_EQ(fwd.out.rfind("l_roa ", 0), 0u);
  const auto pred = read_tensor<float>(dir_ / "pred" / "CAM_BACK.roat");
  EXPECT_EQ(pred.shape(), (Shape{8, 22}));
  for (float v : pred.data()) EXPECT_GE(v, 0.0f);
}

TEST_F(CliTest, AblateKernelCsv) {
  const auto cfg = tiny_config();
  const auto run = roa_cli({"ablate-kernel", "--config", cfg, "--steps", "1", "--kernels", "3,5", "--log-every", "0",
                            "--scale-mode", "fpn_feature"});
  ASSERT_EQ(run.code, 0) << run.err;
  std::istringstream in(run.out);
  std::string header, row3, row5, extra;
  std::getline(in, header);
  std::getline(in, row3);
  std::getline(in, row5);
  EXPECT_FALSE(std::getline(in, extra));
  EXPECT_EQ(header, "kernel_size,scale_mode,region_type,steps,seed,initial_l_roa,final_l_roa,param_count");
  EXPECT_EQ(row3.rfind("3,fpn_feature,overlap,1,7,", 0), 0u) << row3;
  EXPECT_EQ(row5.rfind("5,fpn_feature,overlap,1,7,", 0), 0u) << row5;
  EXPECT_EQ(roa_cli({"ablate-kernel", "--config", cfg, "--steps", "0"}).code, 2);
}
