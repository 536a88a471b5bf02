// Drives the installed command-line binary as a subprocess: exit-code
// contract, JSON output mode, and a gallery CSV round trip that needs no
// trained model.
#include <gtest/gtest.h>

#include <cstdlib>
#include <fstream>
#include <sstream>
#include <string>

#include "json.hpp"
#include "testsupport.hpp"

namespace {

int run(const std::string& args, std::string* output = nullptr) {
  const auto out_path = testsupport::temp_dir("cli") / "out.txt";
  const std::string cmd =
      std::string(SFACE_CLI_PATH) + " " + args + " > " + out_path.string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  if (output) {
    std::ifstream f(out_path);
    std::ostringstream ss;
    ss << f.rdbuf();
    *output = ss.str();
  }
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

TEST(Cli, ExitCodes) {
  EXPECT_EQ(run("--help"), 0);
  EXPECT_EQ(run("definitely-not-a-subcommand"), 1);
  EXPECT_EQ(run("match --model missing.bin --gallery missing.gal --image missing.pgm"), 2);
  EXPECT_EQ(run("import-gallery --csv /nonexistent/x.csv --gallery /tmp/never.gal"), 2);
}

TEST(Cli, GalleryCsvRoundTrip) {
  const auto dir = testsupport::temp_dir("cli_gal");
  const auto csv1 = dir / "g1.csv";
  const auto csv2 = dir / "g2.csv";
  const auto gal = dir / "g.gal";
  {
    std::ofstream f(csv1);
    f << "ID,Vector1,Vector2,Vector3,Vector4,Vector5\n"
      << "alice,0.125,-3.5,0.0078125,42,-0.25\n"
      << "\"has,comma\",1,2,3,4,5\n";
  }
  ASSERT_EQ(run("import-gallery --csv " + csv1.string() + " --gallery " + gal.string()), 0);
  ASSERT_EQ(run("export-gallery --gallery " + gal.string() + " --csv " + csv2.string()), 0);
  std::ifstream a(csv1), b(csv2);
  std::stringstream sa, sb;
  sa << a.rdbuf();
  sb << b.rdbuf();
  // Values above are exact in float32 and short enough that %.9g re-emits
  // them verbatim, so the files must match byte for byte.
  EXPECT_EQ(sa.str(), sb.str());
}

TEST(Cli, GradcheckJsonReportsAllPass) {
  std::string out;
  ASSERT_EQ(run("gradcheck --json", &out), 0);
  const auto parsed = nlohmann::json::parse(out);
  EXPECT_TRUE(parsed["all_pass"].get<bool>());
  EXPECT_GE(parsed["checks"].size(), 20u);
}

}  // namespace
