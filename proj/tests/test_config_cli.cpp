#include <cstdlib>
#include <sstream>

#include "doctest.h"
#include "expforce/cli.hpp"
#include "expforce/errors.hpp"
#include "expforce/io.hpp"
#include "test_support.hpp"

using namespace expforce;
using testing::TempDir;

namespace {

struct CliRun {
  int rc;
  std::string out, err;
};

CliRun cli(std::vector<std::string> args) {
  std::ostringstream out, err;
  int rc = run_cli(args, out, err);
  return {rc, out.str(), err.str()};
}

}  // namespace

TEST_CASE("config precedence: defaults < file < flags") {
  TempDir dir;
  write_file_atomic(dir / "run.ini",
                    "[run]\nseed = 9\nconcurrency = 2\ncache_dir = cache\n"
                    "[endpoints]\npredictor = stub-echo-max\n"
                    "[oracle]\nf_max_n = 15\n");
  auto from_file = resolve_config(dir / "run.ini", {});
  CHECK(from_file.seed == 9);
  CHECK(from_file.concurrency_limit == 2);
  CHECK(from_file.cache_dir == dir / "cache");  // relative to the file
  CHECK(from_file.predictor.kind == "stub-echo-max");
  CHECK(from_file.oracle.f_max_n == 15.0);
  CHECK(from_file.descriptor.kind == "stub-catalog");

  ConfigOverrides o;
  o.seed = 4;
  o.predictor_kind = "stub-echo-mean";
  auto flagged = resolve_config(dir / "run.ini", o);
  CHECK(flagged.seed == 4);
  CHECK(flagged.predictor.kind == "stub-echo-mean");
  CHECK(flagged.concurrency_limit == 2);
  CHECK(config_fingerprint(flagged) != config_fingerprint(from_file));

  ::setenv(kConfigEnvVar, (dir / "run.ini").c_str(), 1);
  CHECK(resolve_config(std::nullopt, {}).seed == 9);
  ::unsetenv(kConfigEnvVar);
  CHECK(resolve_config(std::nullopt, {}).seed == 0);
}

TEST_CASE("config errors") {
  TempDir dir;
  write_file_atomic(dir / "a.ini", "[nonsense]\nx = 1\n");
  CHECK_THROWS_AS(load_config_file(dir / "a.ini"), Error);
  write_file_atomic(dir / "b.ini", "[run]\napi_key = sk-123\n");
  CHECK_THROWS_AS(load_config_file(dir / "b.ini"), Error);
  write_file_atomic(dir / "c.ini", "[endpoints]\npredictor = crystal-ball\n");
  CHECK_THROWS_AS(resolve_config(dir / "c.ini", {}), Error);
  write_file_atomic(dir / "d.ini", "[predictor]\nmax_retries = 9\n[endpoints]\npredictor = remote\n");
  CHECK_THROWS_AS(resolve_config(dir / "d.ini", {}), Error);
}

TEST_CASE("cli exit codes") {
  CHECK(cli({}).rc == 2);
  CHECK(cli({"frobnicate"}).rc == 2);
  CHECK(cli({"eval", "cv"}).rc == 2);
  CHECK(cli({"predict", "--backend", "oracle", "--query-image", "/nonexistent"}).rc == 2);
  auto help = cli({"--help"});
  CHECK(help.rc == 0);
  CHECK(help.out.find("synth-pool") != std::string::npos);
  CHECK(cli({"pool", "validate", "/nonexistent-pool"}).rc == 1);
  CHECK(cli({"--config", "/nonexistent.ini", "pool", "validate", "x"}).rc == 1);
}

TEST_CASE("cli workflow") {
  TempDir dir;
  auto pool = (dir / "pool").string();
  auto r = cli({"synth-pool", "--n", "25", "--out", pool, "--seed", "1"});
  REQUIRE(r.rc == 0);
  CHECK(r.out.rfind("config-fingerprint: ", 0) == 0);

  r = cli({"pool", "validate", pool});
  CHECK(r.rc == 0);
  CHECK(r.out.find("ok: 25 records") != std::string::npos);

  auto cache = (dir / "cache").string();
  r = cli({"embed", pool, "--cache-dir", cache});
  CHECK(r.out.find("provider calls=25") != std::string::npos);
  r = cli({"embed", pool, "--cache-dir", cache});
  CHECK(r.out.find("provider calls=0") != std::string::npos);

  auto img = (dir / "pool" / "images" / "syn-0003.png").string();
  r = cli({"describe", "--query-image", img, "--pool", pool});
  CHECK(r.rc == 0);
  CHECK(r.out.find("mass-band") != std::string::npos);

  r = cli({"retrieve", pool, "--query-image", img, "--query-id", "syn-0003", "--k", "3"});
  CHECK(r.rc == 0);
  CHECK(r.out.find("syn-0003 ") == std::string::npos);

  r = cli({"predict", "--backend", "knn-average", "--pool", pool, "--query-image", img, "--k", "3"});
  CHECK(r.rc == 0);
  CHECK(r.out.find("f_hat=") != std::string::npos);
  r = cli({"predict", "--backend", "zero-shot", "--query-image", img});
  CHECK(r.rc == 0);
  CHECK(r.out.find("f_hat=1.0000") != std::string::npos);

  auto out = (dir / "cv").string();
  r = cli({"eval", "cv", "--pool", pool, "--out", out, "--k", "3"});
  CHECK(r.rc == 0);
  CHECK(r.err.find("query=syn-0000 ") != std::string::npos);
  CHECK(fs::exists(dir / "cv" / "report.json"));
  fs::remove(dir / "cv" / "report.md");
  CHECK(cli({"report", out}).rc == 0);
  CHECK(fs::exists(dir / "cv" / "report.md"));

  r = cli({"eval", "sweep-k", "--pool", pool, "--out", (dir / "sw").string(), "--ks", "1,2,oops"});
  CHECK(r.rc == 2);
}

TEST_CASE("strict mode fails the run when a query fails") {
  TempDir dir;
  auto pool = (dir / "pool").string();
  REQUIRE(cli({"synth-pool", "--n", "12", "--out", pool}).rc == 0);
  // An empty canned descriptor cannot describe anything.
  write_file_atomic(dir / "canned.json", "{}");
  write_file_atomic(dir / "run.ini", "[endpoints]\ndescriptor = stub-canned\n[descriptor]\ncanned_file = canned.json\n");
  auto cfg = (dir / "run.ini").string();
  auto lax = cli({"--config", cfg, "eval", "cv", "--pool", pool, "--out", (dir / "a").string(), "--k", "2"});
  CHECK(lax.rc == 0);
  CHECK(lax.out.find("failures: 12") != std::string::npos);
  auto strict = cli({"--config", cfg, "eval", "cv", "--pool", pool, "--out", (dir / "b").string(), "--k", "2",
                     "--strict"});
  CHECK(strict.rc == 1);
}
