#include <gtest/gtest.h>

#include <sys/wait.h>

#include <array>
#include <cstdio>
#include <fstream>

#include "helpers.hpp"
#include "tcp/io.hpp"

using namespace tcp;
using tcp::testing::scratch_dir;

namespace {

struct CliRun {
  int code = -1;
  std::string out;
};

CliRun run(const std::string& args) {
  const std::string cmd = std::string(TCP_CLI_PATH) + " " + args + " 2>&1";
  CliRun r;
  FILE* pipe = popen(cmd.c_str(), "r");
  if (!pipe) return r;
  std::array<char, 4096> buf{};
  while (std::fgets(buf.data(), buf.size(), pipe)) r.out += buf.data();
  const int status = pclose(pipe);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

std::string dir(const std::string& name) { return scratch_dir("cli_" + name).string(); }

Shape output_shape(const std::string& path) {
  return std::visit([](const auto& t) { return t.shape(); }, read_tensor_file(path));
}

}  // namespace

TEST(Cli, GapOnWideClipKeepsChannelWidth) {
  const std::string d = dir("gap");
  ASSERT_EQ(run("synth --out " + d + "/clip.bin --frames 2 --positions 3 --channels 2048").code, 0);
  CliRun r = run("pool --input " + d + "/clip.bin --variant gap --out " + d + "/rep.bin");
  ASSERT_EQ(r.code, 0) << r.out;
  EXPECT_NE(r.out.find("output (1x2048)"), std::string::npos) << r.out;
  EXPECT_EQ(output_shape(d + "/rep.bin"), (Shape{1, 2048}));
}

TEST(Cli, TcpWithWidth128Gives8256) {
  const std::string d = dir("tcp");
  ASSERT_EQ(run("synth --out " + d + "/clip.bin --frames 4 --positions 4 --channels 256 --height 2 --width 2").code, 0);
  CliRun r = run("pool --input " + d + "/clip.bin --variant tcp --d 128 --out " + d + "/rep.bin");
  ASSERT_EQ(r.code, 0) << r.out;
  EXPECT_EQ(output_shape(d + "/rep.bin"), (Shape{1, 8256}));
  EXPECT_NE(r.out.find("time"), std::string::npos);
}

TEST(Cli, PoolIsDeterministic) {
  const std::string d = dir("determinism");
  ASSERT_EQ(run("synth --out " + d + "/clip.bin --frames 4 --positions 5 --channels 16").code, 0);
  ASSERT_EQ(run("pool --input " + d + "/clip.bin --d 16 --kappa 3 --out " + d + "/a.bin").code, 0);
  ASSERT_EQ(run("pool --input " + d + "/clip.bin --d 16 --kappa 3 --out " + d + "/b.bin").code, 0);
  auto a = std::get<Tensor<float>>(read_tensor_file(d + "/a.bin"));
  auto b = std::get<Tensor<float>>(read_tensor_file(d + "/b.bin"));
  EXPECT_EQ(std::vector<float>(a.data().begin(), a.data().end()), std::vector<float>(b.data().begin(), b.data().end()));
}

TEST(Cli, EvenKernelSizeIsUsageError) {
  const std::string d = dir("kappa");
  ASSERT_EQ(run("synth --out " + d + "/clip.bin --frames 4 --positions 4 --channels 16").code, 0);
  EXPECT_EQ(run("pool --input " + d + "/clip.bin --variant tcp --d 8 --kappa 4").code, 3);
  EXPECT_EQ(run("pool --input " + d + "/clip.bin --variant tcp --d 32").code, 3);
  EXPECT_EQ(run("pool --input " + d + "/clip.bin --variant max").code, 3);
  EXPECT_EQ(run("pool --variant tcp").code, 3);
  EXPECT_EQ(run("frobnicate").code, 3);
}

TEST(Cli, MalformedInputIsFormatError) {
  const std::string d = dir("malformed");
  {
    std::ofstream out(d + "/junk.bin", std::ios::binary);
    out << "definitely not a tensor";
  }
  EXPECT_EQ(run("pool --input " + d + "/junk.bin").code, 2);
  EXPECT_EQ(run("pool --input " + d + "/does_not_exist.bin").code, 2);
  EXPECT_EQ(run("info --params " + d + "/junk.bin").code, 2);
}

TEST(Cli, CheckpointDrivesPool) {
  const std::string d = dir("ckpt");
  {
    std::ofstream cfg(d + "/head.cfg");
    cfg << "channels = 16\ndim = 8\nframes = 4\npositions = 4\nkappa = 3\nnum_classes = 3\n"
           "key_ratio = 2\nreduction = 2\n";
  }
  ASSERT_EQ(run("init --config " + d + "/head.cfg --out " + d + "/h.ckpt").code, 0);
  ASSERT_EQ(run("synth --out " + d + "/clip.bin --frames 4 --positions 4 --channels 16").code, 0);
  CliRun r = run("pool --input " + d + "/clip.bin --params " + d + "/h.ckpt --out " + d + "/rep.bin");
  ASSERT_EQ(r.code, 0) << r.out;
  EXPECT_EQ(output_shape(d + "/rep.bin"), (Shape{1, 36}));
  EXPECT_EQ(run("pool --input " + d + "/clip.bin --params " + d + "/h.ckpt --d 4").code, 3);
  CliRun info = run("info --params " + d + "/h.ckpt");
  EXPECT_EQ(info.code, 0) << info.out;
  EXPECT_NE(info.out.find("exact match"), std::string::npos);
}

TEST(Cli, EquivalenceDefaultGridPasses) {
  CliRun r = run("equivalence --trials 2");
  EXPECT_EQ(r.code, 0) << r.out;
  EXPECT_NE(r.out.find("max relative discrepancy"), std::string::npos);
}

TEST(Cli, EquivalenceWithoutTrialsIsVacuous) {
  CliRun r = run("equivalence --trials 0");
  EXPECT_EQ(r.code, 0);
  EXPECT_NE(r.out.find("no cases run"), std::string::npos);
}

TEST(Cli, EquivalenceDetectsInjectedFault) {
  CliRun r = run("equivalence --trials 1 --inject-fault");
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.out.find("FAIL at"), std::string::npos);
}

TEST(Cli, SqrtBenchConverges) {
  CliRun r = run("sqrt-bench --d 32 --K 1,3,10,20 --cond 100");
  EXPECT_EQ(r.code, 0) << r.out;
  EXPECT_NE(r.out.find(": ok"), std::string::npos);
}

TEST(Cli, GradcheckHeadPasses) {
  CliRun r = run("gradcheck --scope head");
  EXPECT_EQ(r.code, 0) << r.out;
  EXPECT_EQ(run("gradcheck --scope everything").code, 3);
}

TEST(Cli, InfoMatchesLedgerForDefaults) {
  CliRun r = run("info");
  EXPECT_EQ(r.code, 0);
  EXPECT_NE(r.out.find("3674200"), std::string::npos) << r.out;
  EXPECT_NE(r.out.find("exact match"), std::string::npos);
}

TEST(Cli, TrainEmitsJsonLines) {
  const std::string d = dir("train");
  {
    std::ofstream cfg(d + "/train.cfg");
    cfg << "variant = gap\nsamples = 32\nframes = 4\npositions = 4\nchannels = 8\ndim = 8\nepochs = 2\n";
  }
  CliRun r = run("train --config " + d + "/train.cfg --seed 3 --checkpoint " + d + "/t.ckpt");
  ASSERT_EQ(r.code, 0) << r.out;
  EXPECT_NE(r.out.find("\"split\":\"train\""), std::string::npos);
  EXPECT_NE(r.out.find("\"split\":\"val\""), std::string::npos);
  EXPECT_NE(r.out.find("\"seed\":3"), std::string::npos);
  EXPECT_NO_THROW(read_checkpoint(d + "/t.ckpt"));
  {
    std::ofstream cfg(d + "/bad.cfg");
    cfg << "colour = blue\n";
  }
  EXPECT_EQ(run("train --config " + d + "/bad.cfg").code, 3);
}
