#include "doctest.h"

#include <filesystem>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include "srl/cli.hpp"
#include "srl/common.hpp"
#include "srl/io.hpp"
#include "srl/report.hpp"

namespace fs = std::filesystem;
using namespace srl;

namespace {

struct Outcome {
  int code = 0;
  std::string out;
  std::string err;
};

Outcome srltrace(std::vector<std::string> args) {
  args.insert(args.begin(), "srltrace");
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

const fs::path& scratch_root() {
  static const struct Root {
    fs::path path = fs::temp_directory_path() / ("srltrace_cli_" + std::to_string(::getpid()));
    ~Root() {
      std::error_code ec;
      fs::remove_all(path, ec);
    }
  } root;
  return root.path;
}

fs::path scratch(const std::string& name) {
  const auto dir = scratch_root() / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::map<std::string, std::string> hashes(const fs::path& root) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (e.is_regular_file()) out[fs::relative(e.path(), root).generic_string()] = io::sha256_hex(io::read_file(e.path()));
  }
  return out;
}

// One synthetic cohort and full pipeline run shared by the end-to-end cases.
const fs::path& pipeline_root() {
  static const fs::path root = [] {
    const auto dir = scratch("pipeline");
    const auto r = srltrace({"pipeline", "--synth", "--data", (dir / "data").string(), "--work", (dir / "run").string()});
    REQUIRE_MESSAGE(r.code == 0, r.err);
    return dir;
  }();
  return root;
}

std::size_t count_prefixed(const fs::path& dir, const std::string& prefix) {
  std::size_t n = 0;
  for (const auto& e : fs::directory_iterator(dir)) n += e.path().filename().string().rfind(prefix, 0) == 0;
  return n;
}

}  // namespace

TEST_CASE("version, help and usage errors map to exit codes") {
  auto v = srltrace({"--version"});
  CHECK(v.code == 0);
  CHECK(v.out.find(std::string(cli::kVersion)) != std::string::npos);
  CHECK(srltrace({"--help"}).code == 0);
  CHECK(srltrace({}).code == cli::kValidation);
  CHECK(srltrace({"no-such-stage"}).code == cli::kValidation);
  CHECK(srltrace({"ingest", "--k-sess", "many"}).code == cli::kValidation);
}

TEST_CASE("missing prerequisite exits 2 and names the path") {
  const auto dir = scratch("missing");
  const auto r = srltrace({"ingest", "--data", (dir / "nowhere").string(), "--work", (dir / "run").string()});
  CHECK(r.code == cli::kMissingInput);
  CHECK(r.err.find((dir / "nowhere" / "raw.log").string()) != std::string::npos);
  CHECK(srltrace({"tactics", "--work", (dir / "run").string()}).code == cli::kMissingInput);
  CHECK(srltrace({"report", "--work", (dir / "run").string()}).code == cli::kMissingInput);
}

TEST_CASE("validation failures exit 3") {
  const auto dir = scratch("validation");
  CHECK(srltrace({"ingest", "--k-sess", "0", "--data", dir.string()}).code == cli::kValidation);
  CHECK(srltrace({"ingest", "--risk-threshold", "1.5", "--data", dir.string()}).code == cli::kValidation);
  io::write_file_atomic(dir / "bad.json", "{\"k_sess\": 12, \"colour\": \"blue\"}");
  CHECK(srltrace({"ingest", "--config", (dir / "bad.json").string()}).code == cli::kValidation);
  io::write_file_atomic(dir / "broken.json", "{ not json");
  CHECK(srltrace({"ingest", "--config", (dir / "broken.json").string()}).code == cli::kValidation);
  io::write_file_atomic(dir / "raw.log", "this is not a raw log line\n");
  io::write_file_atomic(dir / "course.json",
                        R"({"first_week_start": "2023-09-04", "week_count": 2, "tasks": []})");
  CHECK(srltrace({"ingest", "--data", dir.string(), "--work", (dir / "run").string()}).code == cli::kValidation);
}

TEST_CASE("sessionize on an empty trace writes zero sessions and exits 0") {
  const auto dir = scratch("empty");
  io::write_file_atomic(dir / "course.json",
                        R"({"first_week_start": "2023-09-04", "week_count": 2, "tasks": []})");
  io::write_file_atomic(dir / "run" / "trace.log", "");
  const auto r = srltrace({"sessionize", "--data", dir.string(), "--work", (dir / "run").string()});
  REQUIRE_MESSAGE(r.code == 0, r.err);
  const auto sessions = io::CsvTable::load(dir / "run" / "sessions.csv");
  CHECK(sessions.size() == 0);
  CHECK(!sessions.header().empty());
  CHECK(io::CsvTable::load(dir / "run" / "session_vectors.csv").size() == 0);
  CHECK(fs::exists(dir / "run" / "manifests" / "sessionize.json"));
}

TEST_CASE("config file values override flags") {
  const auto dir = scratch("config");
  io::write_file_atomic(dir / "cfg.json", R"({"k_pass": 2, "seed": 7})");
  io::write_file_atomic(dir / "course.json",
                        R"({"first_week_start": "2023-09-04", "week_count": 2, "tasks": []})");
  io::write_file_atomic(dir / "run" / "trace.log", "");
  const auto r = srltrace({"sessionize", "--k-pass", "3", "--seed", "5", "--k-drop", "4", "--config",
                      (dir / "cfg.json").string(), "--data", dir.string(), "--work", (dir / "run").string()});
  REQUIRE_MESSAGE(r.code == 0, r.err);
  const auto manifest = io::read_file(dir / "run" / "manifests" / "sessionize.json");
  CHECK(manifest.find("\"k_pass\": 2") != std::string::npos);
  CHECK(manifest.find("\"seed\": 7") != std::string::npos);
  CHECK(manifest.find("\"k_drop\": 4") != std::string::npos);
}

TEST_CASE("pipeline on the synthetic defaults emits the full report bundle") {
  const auto& root = pipeline_root();
  const auto bundle = root / "run" / "report";
  CHECK(fs::exists(bundle / "index.html"));
  CHECK(fs::exists(bundle / "tactics.html"));
  CHECK(fs::exists(bundle / "cvi.html"));
  CHECK(fs::exists(bundle / "dendrogram.svg"));
  CHECK(count_prefixed(bundle, "strategy_type_") == 12);
  CHECK(count_prefixed(bundle, "profile_") == 5);
  CHECK(io::CsvTable::load(bundle / "data" / "tactic_table.csv").size() == 12);
  for (const char* cvi : {"tactic_cvi.csv", "strategy_cvi.csv", "profile_cvi.csv"}) {
    CHECK(io::CsvTable::load(bundle / "data" / cvi).size() > 0);
  }
  CHECK(report::check_links(bundle).empty());
  CHECK(fs::exists(root / "run" / "manifest.json"));
  CHECK(fs::exists(root / "data" / "history" / "grades.csv"));
}

TEST_CASE("profile pages carry every dashboard element") {
  const auto bundle = pipeline_root() / "run" / "report";
  for (int i = 1; i <= 5; ++i) {
    const auto html = io::read_file(bundle / ("profile_" + std::to_string(i) + ".html"));
    for (const char* element : {"Median dropout probability", "Median grade", "Majority themes", "Opinion distribution",
                                "Combined heuristic net", "Transition graph", "Dropout explanations"}) {
      CHECK_MESSAGE(html.find(element) != std::string::npos, "profile_" << i << " lacks " << element);
    }
  }
}

TEST_CASE("report numbers come from bundled CSV cells") {
  const auto bundle = pipeline_root() / "run" / "report";
  const auto summary = io::CsvTable::load(bundle / "data" / "profile_summary.csv");
  for (std::size_t r = 0; r < summary.size(); ++r) {
    const auto html = io::read_file(bundle / ("profile_" + std::to_string(r + 1) + ".html"));
    for (const char* col : {"median_p_drop", "median_grade", "n_students", "opinion_absent"}) {
      CHECK(html.find("<td>" + summary.at(r, col) + "</td>") != std::string::npos);
    }
  }
  const auto types = io::CsvTable::load(bundle / "data" / "strategy_type_summary.csv");
  for (std::size_t r = 0; r < types.size(); ++r) {
    const auto id = std::stoi(types.at(r, "type_id"));
    const auto name = "strategy_type_" + std::string(id < 9 ? "0" : "") + std::to_string(id + 1) + ".html";
    const auto html = io::read_file(bundle / name);
    CHECK(html.find("<td>" + types.at(r, "count") + "</td>") != std::string::npos);
    CHECK(html.find("<td>" + types.at(r, "median_p_drop") + "</td>") != std::string::npos);
  }
}

TEST_CASE("stage reruns with unchanged inputs are byte-identical") {
  const auto& root = pipeline_root();
  const auto run = root / "run";
  const auto before = hashes(run);
  for (const char* stage : {"strategies", "risk-score", "cluster-strategies", "profiles", "stats", "report"}) {
    const auto r = srltrace({stage, "--data", (root / "data").string(), "--work", run.string()});
    REQUIRE_MESSAGE(r.code == 0, r.err);
  }
  CHECK(hashes(run) == before);
}

TEST_CASE("cohort without self-reports renders omission notes") {
  const auto& root = pipeline_root();
  const auto data = scratch("no_reports_data");
  const auto run = scratch("no_reports_run");
  for (const auto& e : fs::directory_iterator(root / "data")) {
    if (e.is_regular_file() && e.path().filename() != "themes.csv" && e.path().filename() != "opinions.csv") {
      fs::copy_file(e.path(), data / e.path().filename());
    }
  }
  fs::copy(root / "run", run, fs::copy_options::recursive | fs::copy_options::overwrite_existing);
  for (const char* stage : {"profiles", "stats", "report"}) {
    const auto r = srltrace({stage, "--data", data.string(), "--work", run.string()});
    REQUIRE_MESSAGE(r.code == 0, r.err);
  }
  CHECK(!fs::exists(run / "profile_themes.csv"));
  for (int i = 1; i <= 5; ++i) {
    const auto html = io::read_file(run / "report" / ("profile_" + std::to_string(i) + ".html"));
    CHECK(html.find("No self-reports") != std::string::npos);
  }
  CHECK(report::check_links(run / "report").empty());
}

TEST_CASE("link checker reports dangling and escaping references") {
  const auto dir = scratch("links");
  io::write_file_atomic(dir / "present.csv", "a\n1\n");
  io::write_file_atomic(dir / "index.html",
                        "<a href=\"present.csv\">ok</a><a href=\"#top\">anchor</a>"
                        "<a href=\"https://example.org/x\">external</a><a href=\"absent.csv\">bad</a>"
                        "<img src=\"../outside.svg\"><a href=\"sub/page.html\">sub</a>");
  io::write_file_atomic(dir / "sub" / "page.html", "<a href=\"../present.csv\">up</a><a href=\"gone.dot\">x</a>");
  const auto issues = report::check_links(dir);
  REQUIRE(issues.size() == 3);
  CHECK(issues[0].page == "index.html");
  CHECK(issues[0].target == "absent.csv");
  CHECK(issues[1].target == "../outside.svg");
  CHECK(issues[2].page == "sub/page.html");
  CHECK(issues[2].target == "gone.dot");
}

TEST_CASE("report refuses to replace a directory that is not a bundle") {
  const auto& root = pipeline_root();
  const auto target = scratch("not_a_bundle");
  io::write_file_atomic(target / "precious.txt", "keep");
  CHECK_THROWS_AS(report::emit_report(root / "run", target), ValidationError);
  CHECK(fs::exists(target / "precious.txt"));
}
