#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <regex>
#include <sstream>

#include "nerp/checkpoint.hpp"
#include "nerp/commands.hpp"
#include "nerp/errors.hpp"
#include "nerp/image_io.hpp"
#include "nerp/scene_io.hpp"
#include "test_support.hpp"

namespace nerp {
namespace {

namespace fs = std::filesystem;

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

class Commands : public ::testing::Test {
 protected:
  void SetUp() override {
    dir = fs::temp_directory_path() /
          ("nerp_cmd_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir);
    fs::create_directories(dir);
    save_scene((dir / "scene.json").string(), testing::small_scene("sphere-box", 16));
  }
  void TearDown() override { fs::remove_all(dir); }

  RunConfig config(const std::string& out, int steps = 2) const {
    RunConfig c;
    c.scene = (dir / "scene.json").string();
    c.seed = 5;
    c.samples_per_ray = 8;
    c.batch_size = 16;
    c.steps = steps;
    c.log_every = 1;
    c.lidar_rays = 16;
    c.encoder_channels = 8;
    c.encoder_stride = 2;
    c.attention_heads = 2;
    c.attention_points = 2;
    c.encoding_bands = 2;
    c.out = (dir / out).string();
    return c;
  }

  std::string pretrained(const std::string& out = "run", int steps = 2) {
    std::ostringstream log;
    cmd_pretrain(config(out, steps), log);
    return (dir / out / "checkpoint.nrp3").string();
  }

  fs::path dir;
};

TEST_F(Commands, GenSceneWritesLoadablePreset) {
  const auto path = (dir / "crowd.json").string();
  cmd_gen_scene("crowd", path);
  const SyntheticScene scene = load_scene(path);
  EXPECT_EQ(scene.primitives.size(), make_preset("crowd").primitives.size());
  EXPECT_THROW(cmd_gen_scene("teapot", (dir / "x.json").string()), InputFault);
}

TEST_F(Commands, PretrainWritesMetricsAndCheckpoint) {
  std::ostringstream log;
  cmd_pretrain(config("run", 3), log);
  const std::string metrics = slurp(dir / "run" / "metrics.csv");
  std::istringstream lines(metrics);
  std::string line;
  std::getline(lines, line);
  EXPECT_EQ(line, "step,total,rgb,depth,reproj,psnr_train");
  const std::regex row(R"(\d+(,-?[0-9.eE+-]+){5})");
  int rows = 0;
  while (std::getline(lines, line)) {
    EXPECT_TRUE(std::regex_match(line, row)) << line;
    ++rows;
  }
  EXPECT_EQ(rows, 3);
  EXPECT_NE(log.str().find(metrics.substr(metrics.find('\n') + 1)), std::string::npos);
  const Checkpoint ckpt = load_checkpoint((dir / "run" / "checkpoint.nrp3").string());
  EXPECT_EQ(ckpt.step, 3);
  EXPECT_EQ(ckpt.config.seed, 5u);
}

TEST_F(Commands, ZeroStepsStoresInitialization) {
  const Checkpoint ckpt = load_checkpoint(pretrained("zero", 0));
  const RunConfig c = config("zero", 0);
  const TrainState init = init_train_state(make_model_config(c, load_scene(c.scene)), make_train_config(c));
  EXPECT_TRUE(std::equal(ckpt.values.begin(), ckpt.values.end(), init.tape.values().begin()));
  EXPECT_EQ(ckpt.step, 0);
}

TEST_F(Commands, SameSeedIsByteIdentical) {
  const auto a = pretrained("a");
  const auto b = pretrained("b");
  EXPECT_EQ(slurp(dir / "a" / "metrics.csv"), slurp(dir / "b" / "metrics.csv"));
  const Checkpoint ca = load_checkpoint(a);
  const Checkpoint cb = load_checkpoint(b);
  EXPECT_EQ(ca.values, cb.values);
  EXPECT_EQ(ca.m, cb.m);
  EXPECT_EQ(ca.v, cb.v);

  RunConfig other = config("c");
  other.seed = 6;
  std::ostringstream log;
  cmd_pretrain(other, log);
  EXPECT_NE(slurp(dir / "a" / "metrics.csv"), slurp(dir / "c" / "metrics.csv"));
}

TEST_F(Commands, RenderIsDeterministicAndChecksCamera) {
  const auto ckpt = pretrained();
  RenderOptions opts;
  opts.checkpoint = ckpt;
  opts.camera = 8;
  opts.out_prefix = (dir / "r1").string();
  cmd_render(opts);
  opts.out_prefix = (dir / "r2").string();
  cmd_render(opts);
  EXPECT_EQ(slurp(dir / "r1.f32"), slurp(dir / "r2.f32"));
  EXPECT_EQ(slurp(dir / "r1_depth.f32"), slurp(dir / "r2_depth.f32"));
  const Image color = read_f32((dir / "r1.f32").string());
  const Image depth = read_f32((dir / "r1_depth.f32").string());
  EXPECT_EQ(color.height, 16);
  EXPECT_EQ(color.channels, 3);
  EXPECT_EQ(depth.channels, 1);
  EXPECT_TRUE(read_ppm((dir / "r1.ppm").string()).same_shape(color));

  opts.camera = 10;
  EXPECT_THROW(cmd_render(opts), InputFault);
  opts.camera = 0;
  std::array<double, 16> bad{};
  bad[0] = 2.0;
  opts.pose = bad;
  EXPECT_THROW(cmd_render(opts), InputFault);
}

TEST_F(Commands, ExplicitPoseMatchesSceneCamera) {
  const auto ckpt = pretrained();
  const SyntheticScene scene = load_scene((dir / "scene.json").string());
  const auto& p = scene.cameras[9].camera.pose;
  std::array<double, 16> pose{};
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) pose[4 * r + c] = p.rotation(r, c);
    pose[4 * r + 3] = p.translation[r];
  }
  pose[15] = 1.0;
  RenderOptions opts;
  opts.checkpoint = ckpt;
  opts.camera = 9;
  opts.out_prefix = (dir / "a").string();
  cmd_render(opts);
  opts.camera = 0;
  opts.pose = pose;
  opts.out_prefix = (dir / "b").string();
  cmd_render(opts);
  EXPECT_EQ(slurp(dir / "a.f32"), slurp(dir / "b.f32"));
}

TEST_F(Commands, EvalOracleIsPerfectAndReportsAgree) {
  const auto ckpt = pretrained();
  EvalOptions opts;
  opts.checkpoint = ckpt;
  opts.oracle = true;
  std::ostringstream out;
  cmd_eval(opts, out);
  const std::string text = out.str();
  const std::regex machine(R"(metrics split=heldout view=(\S+) psnr=(\S+) ssim=(\S+))");
  std::smatch m;
  ASSERT_TRUE(std::regex_search(text, m, machine)) << text;
  EXPECT_EQ(m[3].str(), "1.000000");
  EXPECT_NE(text.find("PSNR " + m[2].str() + " dB"), std::string::npos) << text;

  opts.oracle = false;
  opts.split = "train";
  std::ostringstream trained;
  cmd_eval(opts, trained);
  std::smatch first;
  const std::string t = trained.str();
  ASSERT_TRUE(std::regex_search(t, first, std::regex(R"(metrics split=train view=(\S+) psnr=(\S+))"))) << t;
  EXPECT_NE(t.find("PSNR " + first[2].str() + " dB"), std::string::npos) << t;

  opts.split = "nowhere";
  std::ostringstream ignored;
  EXPECT_THROW(cmd_eval(opts, ignored), InputFault);
}

TEST_F(Commands, ExtractFeaturesShapes) {
  const auto ckpt = pretrained();
  ExtractOptions opts;
  opts.checkpoint = ckpt;
  opts.x = 1;
  opts.y = 1;
  opts.z = 1;
  opts.out = (dir / "one.nrpv").string();
  cmd_extract_features(opts);
  const Volume one = read_volume(opts.out);
  EXPECT_EQ(one.channels, 8);
  EXPECT_EQ(one.values.size(), 8u);

  opts.x = 4;
  opts.y = 4;
  opts.z = 2;
  opts.out = (dir / "grid.nrpv").string();
  cmd_extract_features(opts);
  const Volume grid = read_volume(opts.out);
  EXPECT_EQ(grid.x, 4);
  EXPECT_EQ(grid.z, 2);
  EXPECT_EQ(grid.values.size(), 4u * 4u * 2u * 8u);
  for (float f : grid.values) EXPECT_TRUE(std::isfinite(f));

  opts.x = 0;
  EXPECT_THROW(cmd_extract_features(opts), InputFault);
}

TEST_F(Commands, GradCheckListsEverySegment) {
  GradCheckOptions opts;
  opts.indices_per_segment = 3;
  opts.rays = 4;
  opts.perturb = 0.05;
  opts.eps = 1e-4;
  std::ostringstream out;
  const int code = cmd_grad_check(config("gc"), opts, out);
  const std::string text = out.str();
  EXPECT_EQ(code, kExitOk) << text;
  EXPECT_NE(text.find("PASS"), std::string::npos);
  const RunConfig c = config("gc");
  const TrainState st = init_train_state(make_model_config(c, load_scene(c.scene)), make_train_config(c));
  for (const auto& seg : st.tape.segments()) {
    const std::regex line("segment=" + seg.name + " ");
    EXPECT_EQ(std::distance(std::sregex_iterator(text.begin(), text.end(), line), std::sregex_iterator()), 1)
        << seg.name << "\n" << text;
  }
}

TEST_F(Commands, GradCheckFailsOnImpossibleThreshold) {
  GradCheckOptions opts;
  opts.indices_per_segment = 2;
  opts.rays = 4;
  opts.perturb = 0.05;
  opts.threshold = -1.0;
  std::ostringstream out;
  EXPECT_EQ(cmd_grad_check(config("gc"), opts, out), kExitThreshold);
  EXPECT_NE(out.str().find("FAIL"), std::string::npos);
}

TEST_F(Commands, MissingSceneNamesThePath) {
  RunConfig c = config("run");
  c.scene = (dir / "absent.json").string();
  std::ostringstream log;
  try {
    cmd_pretrain(c, log);
    FAIL() << "expected InputFault";
  } catch (const InputFault& e) {
    EXPECT_NE(std::string(e.what()).find("absent.json"), std::string::npos) << e.what();
  }
}

}  // namespace
}  // namespace nerp
