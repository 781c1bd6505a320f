#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "thermo/cli.hpp"

using namespace thermo;

namespace {

struct Outcome {
  int status;
  std::string out;
  std::string err;
};

Outcome invoke(std::vector<std::string> args) {
  args.insert(args.begin(), "thermo");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int status = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
  return {status, out.str(), err.str()};
}

std::filesystem::path scratch(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / "thermo_cli_test";
  std::filesystem::create_directories(dir);
  return dir / name;
}

std::string write_file(const std::string& name, const std::string& text) {
  const auto p = scratch(name);
  std::ofstream(p) << text;
  return p.string();
}

std::string read_file(const std::string& path) {
  std::ifstream f(path);
  std::stringstream s;
  s << f.rdbuf();
  return s.str();
}

// everything except the timestamp line
std::string body(const std::string& csv) {
  std::istringstream in(csv);
  std::string line, out;
  while (std::getline(in, line))
    if (line.rfind("# generated", 0) != 0) out += line + "\n";
  return out;
}

}  // namespace

TEST(Config, ParsesTypedValues) {
  const Config c = Config::parse("model = gauss\n# comment\ntruncation.j_max = 50\npotential.h1 = false\n");
  EXPECT_EQ(c.str("model"), "gauss");
  EXPECT_EQ(c.integer("truncation.j_max"), 50);
  EXPECT_FALSE(c.boolean("potential.h1"));
  EXPECT_EQ(c.integer("truncation.n_max"), 400);
  EXPECT_THROW(Config::parse("no_such_key = 1\n"), ValidationError);
  EXPECT_THROW(Config::parse("truncation.j_max = many\n"), ValidationError);
  EXPECT_THROW(Config::parse("model = tent\n"), ValidationError);
}

TEST(Config, DigitSetsAndGrids) {
  EXPECT_EQ(parse_digit_set("1..3,7"), (std::vector<Index>{1, 2, 3, 7}));
  EXPECT_THROW(parse_digit_set("0,1"), ValidationError);
  EXPECT_EQ(parse_grid("pressure.b", "0:1:3"), (std::vector<double>{0.0, 0.5, 1.0}));
}

TEST(Cli, HelpListsColumns) {
  const Outcome o = invoke({"--help"});
  EXPECT_EQ(o.status, 0);
  EXPECT_NE(o.out.find("spectrum"), std::string::npos);
  EXPECT_NE(o.out.find("error"), std::string::npos);
}

TEST(Cli, ValidationErrorsExitTwo) {
  EXPECT_EQ(invoke({"frobnicate"}).status, 2);
  EXPECT_EQ(invoke({"check", "--format", "xml"}).status, 2);
  const std::string bad = write_file("bad.cfg", "no_such_key = 3\n");
  const Outcome o = invoke({"check", "--config", bad});
  EXPECT_EQ(o.status, 2);
  EXPECT_NE(o.err.find("validation-error"), std::string::npos);
  EXPECT_EQ(invoke({"bcf", "--config", write_file("x.cfg", "bcf.x = 1.5\n")}).status, 2);
}

TEST(Cli, NumericalErrorsExitThree) {
  const std::string cfg = write_file("below.cfg", "spectrum.alpha = 0.5, 1.2\ntruncation.j_max = 100\ntruncation.n_max = 100\n");
  const Outcome o = invoke({"spectrum", "--config", cfg});
  EXPECT_EQ(o.status, 3);
  EXPECT_NE(o.err.find("numerical-error"), std::string::npos);
  // the failing point is reported as a row, the good one is still computed
  EXPECT_NE(o.out.find(",error,"), std::string::npos);
  EXPECT_NE(o.out.find("\n1.2,"), std::string::npos);

  const std::string outside = write_file("outside.cfg", "sample.b = 1\nsample.q = 0.5\nsample.length = 10\n");
  EXPECT_EQ(invoke({"sample", "--config", outside}).status, 3);
}

TEST(Cli, DeterministicOutput) {
  const std::string cfg = write_file("det.cfg", "bcf.random = 5\nbcf.n = 30\n");
  const Outcome a = invoke({"bcf", "--config", cfg, "--seed", "11"});
  const Outcome b = invoke({"bcf", "--config", cfg, "--seed", "11"});
  ASSERT_EQ(a.status, 0);
  EXPECT_EQ(body(a.out), body(b.out));
  EXPECT_NE(body(a.out), body(invoke({"bcf", "--config", cfg, "--seed", "12"}).out));
}

TEST(Cli, ReportReproducesItself) {
  const std::string cfg =
      write_file("rt.cfg", "pressure.b = 0.7:0.9:2\npressure.q = 0:0.2:2\ntruncation.j_max = 60\ntruncation.n_max = 60\n");
  const std::string first = scratch("first.csv").string();
  ASSERT_EQ(invoke({"pressure", "--config", cfg, "--out", first}).status, 0);
  const std::string second = scratch("second.csv").string();
  ASSERT_EQ(invoke({"pressure", "--config", first, "--out", second}).status, 0);
  std::string again = body(read_file(second));
  const auto at = again.find(second);
  ASSERT_NE(at, std::string::npos);
  again.replace(at, second.size(), first);
  EXPECT_EQ(body(read_file(first)), again);
}

TEST(Cli, DimensionOfGaussPair) {
  const std::string cfg = write_file("dim.cfg", "model = gauss\ndimension.subsystems = 1,2\n");
  const Outcome o = invoke({"dimension", "--config", cfg});
  ASSERT_EQ(o.status, 0);
  EXPECT_NE(o.out.find("0.5312805"), std::string::npos) << o.out;
}

TEST(Cli, ArithmeticMeanSpectrumIsFlat) {
  const std::string cfg = write_file("flat.cfg", "potential = b1_pow\nspectrum.alpha = 2.5, 4\n");
  const Outcome o = invoke({"spectrum", "--config", cfg});
  ASSERT_EQ(o.status, 0) << o.err;
  EXPECT_NE(o.out.find("\n2.5,1,"), std::string::npos) << o.out;
  EXPECT_NE(o.out.find("\n4,1,"), std::string::npos) << o.out;
}

TEST(Cli, CheckPasses) {
  const Outcome o = invoke({"check"});
  ASSERT_EQ(o.status, 0);
  EXPECT_EQ(o.out.find(",false,"), std::string::npos) << o.out;
  EXPECT_NE(o.out.find("condition,value,limit,pass,detail"), std::string::npos);
}

TEST(Cli, JsonFormat) {
  const std::string cfg = write_file("json.cfg", "bcf.x = 0.25, 0.5\nbcf.n = 8\n");
  const Outcome o = invoke({"bcf", "--config", cfg, "--format", "json"});
  ASSERT_EQ(o.status, 0);
  const auto j = nlohmann::json::parse(o.out);
  EXPECT_EQ(j["command"], "bcf");
  ASSERT_EQ(j["rows"].size(), 2u);
  EXPECT_EQ(j["rows"][1]["digits"], "3 2 2 2 2 2 2 2");
  EXPECT_TRUE(j["rows"][1]["terminated"].get<bool>());
  EXPECT_EQ(j["config"]["output.format"], "json");
}
