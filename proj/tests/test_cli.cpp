#include <doctest.h>

#include <cstdlib>
#include <regex>
#include <set>
#include <sstream>

#include "cli.hpp"
#include "polylab/bench.hpp"
#include "polylab/data.hpp"
#include "polylab/io.hpp"
#include "support.hpp"

using test_support::TempDir;
using nlohmann::json;

namespace {

struct Run {
    int code = -1;
    std::string out;
    std::string err;
};

Run run(std::vector<std::string> args) {
    std::ostringstream out, err;
    Run r;
    r.code = polylab::cli::run(args, out, err);
    r.out = out.str();
    r.err = err.str();
    return r;
}

std::string p(const std::filesystem::path& path) { return path.string(); }

std::size_t line_count(const std::filesystem::path& path) {
    const std::string text = polylab::read_text(path);
    return static_cast<std::size_t>(std::count(text.begin(), text.end(), '\n'));
}

std::set<std::string> fills(const std::string& svg) {
    std::set<std::string> out;
    const std::regex re("fill=\"(#[0-9a-f]{6})\"");
    for (auto it = std::sregex_iterator(svg.begin(), svg.end(), re); it != std::sregex_iterator(); ++it)
        out.insert((*it)[1]);
    return out;
}

// A small XOR pair shared by the slower cases.
const std::filesystem::path& xor_dir() {
    static TempDir dir("cli-xor");
    static const bool made = [] {
        REQUIRE(run({"gen-xor", "--n-train", "600", "--n-test", "200", "--seed", "5", "--out", p(dir / "xor")}).code == 0);
        return true;
    }();
    (void)made;
    static const std::filesystem::path path = dir / "xor";
    return path;
}

class ScopedEnv {
public:
    ScopedEnv(const char* name, const char* value) : name_(name) {
        if (const char* old = std::getenv(name)) old_ = old;
        if (value) ::setenv(name, value, 1);
        else ::unsetenv(name);
    }
    ~ScopedEnv() {
        if (old_) ::setenv(name_, old_->c_str(), 1);
        else ::unsetenv(name_);
    }

private:
    const char* name_;
    std::optional<std::string> old_;
};

} // namespace

TEST_CASE("help output matches the golden files") {
    for (const std::string cmd : {"gen-xor", "train", "partition-map", "bench", "plot", "report"}) {
        CAPTURE(cmd);
        const Run r = run({cmd, "--help"});
        CHECK(r.code == 0);
        CHECK(r.out == polylab::read_text(test_support::source_dir() / "tests" / "golden" / (cmd + ".txt")));
    }
    const Run top = run({"--help"});
    CHECK(top.code == 0);
    CHECK(top.out == polylab::read_text(test_support::source_dir() / "tests" / "golden" / "polylab.txt"));
}

TEST_CASE("usage errors exit with 2") {
    CHECK(run({}).code == 2);
    CHECK(run({"bogus"}).code == 2);
    CHECK(run({"gen-xor", "--n-train", "0"}).code == 2);
    CHECK(run({"gen-xor", "--sigma", "-1"}).code == 2);
    CHECK(run({"gen-xor", "--unknown-flag"}).code == 2);
    CHECK(run({"train"}).code == 2);
    CHECK(run({"plot", "--records", "/nonexistent/records.jsonl"}).code == 2);
}

TEST_CASE("gen-xor defaults, determinism and manifest") {
    TempDir dir;
    const Run a = run({"gen-xor", "--seed", "9", "--out", p(dir / "a")});
    REQUIRE(a.code == 0);
    CHECK(a.out.find("bayes accuracy: 0.955536") != std::string::npos);
    CHECK(a.out.find("seed: 9") != std::string::npos);
    CHECK(a.out.find("config: ") != std::string::npos);
    CHECK(line_count(dir / "a" / "train.csv") == 4097);
    CHECK(line_count(dir / "a" / "test.csv") == 1001);
    REQUIRE(run({"gen-xor", "--seed", "9", "--out", p(dir / "b")}).code == 0);
    CHECK(polylab::read_text(dir / "a" / "train.csv") == polylab::read_text(dir / "b" / "train.csv"));
    CHECK(polylab::read_text(dir / "a" / "test.csv") == polylab::read_text(dir / "b" / "test.csv"));
    const json m = polylab::read_json(dir / "a" / "manifest.json");
    CHECK(m["command"] == "gen-xor");
    CHECK(m["seed"] == 9);
    CHECK(m["files"] == json::array({"test.csv", "train.csv"}));
    CHECK(polylab::read_text(dir / "a" / "manifest.json").find("time") == std::string::npos);
}

TEST_CASE("seed falls back to the environment") {
    TempDir dir;
    {
        ScopedEnv env("POLYLAB_SEED", "77");
        const Run r = run({"gen-xor", "--n-train", "20", "--n-test", "10", "--out", p(dir / "env")});
        CHECK(r.out.find("seed: 77") != std::string::npos);
        const Run flag = run({"gen-xor", "--n-train", "20", "--n-test", "10", "--seed", "3", "--out", p(dir / "flag")});
        CHECK(flag.out.find("seed: 3") != std::string::npos);
    }
    {
        ScopedEnv env("POLYLAB_SEED", "abc");
        CHECK(run({"gen-xor", "--n-train", "20", "--n-test", "10", "--out", p(dir / "bad")}).code == 2);
    }
    {
        ScopedEnv env("POLYLAB_SEED", nullptr);
        const Run r = run({"gen-xor", "--n-train", "20", "--n-test", "10", "--out", p(dir / "none")});
        CHECK(r.out.find("seed: 0") != std::string::npos);
    }
}

TEST_CASE("train writes a forest model and metrics") {
    TempDir dir;
    const auto& data = xor_dir();
    const Run r = run({"train", "--data", p(data / "train.csv"), "--test", p(data / "test.csv"), "--family", "forest",
                       "--max-features", "sqrt", "--trees", "20", "--seed", "1", "--out", p(dir / "forest")});
    REQUIRE(r.code == 0);
    const json model = polylab::read_json(dir / "forest" / "model.json");
    CHECK(model["kind"] == "forest");
    const json metrics = polylab::read_json(dir / "forest" / "metrics.json");
    CHECK(metrics["test_accuracy"].get<double>() > 0.85);
    const json manifest = polylab::read_json(dir / "forest" / "manifest.json");
    CHECK(manifest["files"] == json::array({"metrics.json", "model.json"}));

    const Run again = run({"train", "--data", p(data / "train.csv"), "--family", "forest", "--trees", "20", "--seed", "1",
                           "--out", p(dir / "forest2")});
    REQUIRE(again.code == 0);
    CHECK(polylab::read_text(dir / "forest" / "model.json") == polylab::read_text(dir / "forest2" / "model.json"));
}

TEST_CASE("train reads settings from a config file") {
    TempDir dir;
    const auto& data = xor_dir();
    std::filesystem::copy_file(data / "train.csv", dir / "train.csv");
    polylab::write_text(dir / "train.toml",
                        "data = \"train.csv\"\nfamily = \"network\"\nhidden = [8]\nmax_epochs = 5\nseed = 4\n");
    const Run r = run({"train", "--config", p(dir / "train.toml"), "--out", p(dir / "net")});
    REQUIRE(r.code == 0);
    CHECK(r.out.find("seed: 4") != std::string::npos);
    CHECK(polylab::read_json(dir / "net" / "model.json")["widths"] == json::array({2, 8, 2}));
    // Command-line flags win over the file.
    const Run flag = run({"train", "--config", p(dir / "train.toml"), "--hidden", "3", "--seed", "6", "--out", p(dir / "net2")});
    REQUIRE(flag.code == 0);
    CHECK(flag.out.find("seed: 6") != std::string::npos);
    CHECK(polylab::read_json(dir / "net2" / "model.json")["widths"] == json::array({2, 3, 2}));

    polylab::write_text(dir / "typo.toml", "famly = \"network\"\n");
    CHECK(run({"train", "--config", p(dir / "typo.toml"), "--data", p(data / "train.csv")}).code == 2);
    polylab::write_text(dir / "range.toml", "max_epochs = 0\n");
    CHECK(run({"train", "--config", p(dir / "range.toml"), "--data", p(data / "train.csv")}).code == 2);
}

TEST_CASE("train failures map to exit codes") {
    TempDir dir;
    const auto& data = xor_dir();
    CHECK(run({"train", "--data", p(data / "train.csv"), "--family", "network", "--learning-rate", "1e200", "--out",
               p(dir / "div")})
              .code == 1);
    polylab::write_text(dir / "bad.csv", "x,label\nabc,a\n1,b\n");
    CHECK(run({"train", "--data", p(dir / "bad.csv"), "--out", p(dir / "bad")}).code == 2);
    CHECK(run({"train", "--data", p(data / "train.csv"), "--label", "nope", "--out", p(dir / "nolabel")}).code == 2);
    polylab::write_text(dir / "blocker", "file");
    CHECK(run({"train", "--data", p(data / "train.csv"), "--trees", "2", "--out", p(dir / "blocker" / "sub")}).code == 1);
}

TEST_CASE("partition maps for both families") {
    TempDir dir;
    const auto& data = xor_dir();
    REQUIRE(run({"train", "--data", p(data / "train.csv"), "--family", "network", "--hidden", "8,8", "--seed", "2", "--out",
                 p(dir / "net")})
                .code == 0);
    REQUIRE(run({"train", "--data", p(data / "train.csv"), "--family", "forest", "--trees", "3", "--seed", "2", "--out",
                 p(dir / "forest")})
                .code == 0);

    const Run overlay = run({"partition-map", "--model", p(dir / "net" / "model.json"), "--data", p(data / "train.csv"),
                             "--mode", "layer-overlay", "--grid", "64", "--out", p(dir / "overlay")});
    REQUIRE(overlay.code == 0);
    CHECK(overlay.out.find("layer: 2") != std::string::npos);
    const std::string svg = polylab::read_text(dir / "overlay" / "partition.svg");
    CHECK(svg.find("<path") != std::string::npos);

    const Run exact = run({"partition-map", "--model", p(dir / "net" / "model.json"), "--data", p(data / "train.csv"),
                           "--mode", "class-tint", "--exact", "--layer", "1", "--out", p(dir / "exact")});
    REQUIRE(exact.code == 0);
    const json regions = polylab::read_json(dir / "exact" / "regions.json");
    CHECK(regions.size() >= 1);
    CHECK(regions.size() <= 1 + 8 + 8 * 7 / 2);
    CHECK(exact.out.find("regions: " + std::to_string(regions.size())) != std::string::npos);

    const Run forest = run({"partition-map", "--model", p(dir / "forest" / "model.json"), "--data", p(data / "train.csv"),
                            "--layer", "3", "--exact", "--out", p(dir / "forest-map")});
    REQUIRE(forest.code == 0);
    const Run forest_grid = run({"partition-map", "--model", p(dir / "forest" / "model.json"), "--domain", "-3,3,-3,3",
                                 "--grid", "50", "--out", p(dir / "forest-grid")});
    CHECK(forest_grid.code == 0);

    const Run again = run({"partition-map", "--model", p(dir / "net" / "model.json"), "--data", p(data / "train.csv"),
                           "--mode", "layer-overlay", "--grid", "64", "--out", p(dir / "overlay2")});
    REQUIRE(again.code == 0);
    CHECK(polylab::read_text(dir / "overlay2" / "partition.svg") == svg);

    CHECK(run({"partition-map", "--model", p(dir / "net" / "model.json"), "--mode", "class-tint", "--domain", "-1,1,-1,1",
               "--out", p(dir / "x")})
              .code == 2);
    CHECK(run({"partition-map", "--model", p(dir / "net" / "model.json"), "--out", p(dir / "x")}).code == 2);
    CHECK(run({"partition-map", "--model", p(dir / "net" / "model.json"), "--layer", "5", "--domain", "-1,1,-1,1",
               "--out", p(dir / "x")})
              .code == 2);
}

TEST_CASE("constant model renders a single color") {
    TempDir dir;
    const json model = {{"kind", "network"},
                        {"widths", {2, 2, 2}},
                        {"weights", {{0, 0, 0, 0}, {0, 0, 0, 0}}},
                        {"biases", {{0, 0}, {0, 0}}}};
    polylab::write_json(dir / "const.json", model);
    const Run r = run({"partition-map", "--model", p(dir / "const.json"), "--domain", "0,1,0,1", "--grid", "16", "--out",
                       p(dir / "map")});
    REQUIRE(r.code == 0);
    CHECK(r.out.find("regions: 1") != std::string::npos);
    CHECK(fills(polylab::read_text(dir / "map" / "partition.svg")).size() == 1);
}

TEST_CASE("exact maps need two-dimensional models") {
    TempDir dir;
    polylab::write_text(dir / "three.csv", "a,b,c,label\n0,0,0,x\n1,1,1,y\n0,1,0,x\n1,0,1,y\n");
    REQUIRE(run({"train", "--data", p(dir / "three.csv"), "--trees", "2", "--out", p(dir / "m")}).code == 0);
    const Run r = run({"partition-map", "--model", p(dir / "m" / "model.json"), "--exact", "--domain", "0,1,0,1", "--out",
                       p(dir / "map")});
    CHECK(r.code == 2);
    CHECK(r.err.find("2-D") != std::string::npos);
}

TEST_CASE("bench, plot and report") {
    TempDir dir;
    const std::vector<std::string> args{"bench", "--xor", "--families", "forest,network", "--trees", "5", "--draws", "2",
                                        "--max-epochs", "10", "--folds", "2", "--schedule-length", "3", "--sample-cap",
                                        "300", "--seed", "4", "--out", p(dir / "bench")};
    const Run first = run(args);
    REQUIRE(first.code == 0);
    CHECK(first.out.find("trained 12, skipped 0, records 12") != std::string::npos);
    const Run second = run(args);
    REQUIRE(second.code == 0);
    CHECK(second.out.find("trained 0, skipped 12, records 12") != std::string::npos);

    const auto log = dir / "bench" / "records.jsonl";
    for (const std::string metric : {"kappa", "ece", "time"}) {
        const Run r = run({"plot", "--records", p(log), "--metric", metric, "--out", p(dir / "plots")});
        CHECK(r.code == 0);
        CHECK(std::filesystem::exists(dir / "plots" / (metric + ".svg")));
    }

    // Duplicated records plot the same as the original log.
    const std::string text = polylab::read_text(log);
    polylab::write_text(dir / "doubled.jsonl", text + text);
    REQUIRE(run({"plot", "--records", p(dir / "doubled.jsonl"), "--out", p(dir / "plots2")}).code == 0);
    CHECK(polylab::read_text(dir / "plots2" / "kappa.svg") == polylab::read_text(dir / "plots" / "kappa.svg"));

    const Run md = run({"report", "--records", p(log), "--out", p(dir / "report")});
    CHECK(md.code == 0);
    CHECK(std::filesystem::exists(dir / "report" / "report.md"));
    const Run html = run({"report", "--records", p(log), "--format", "html", "--out", p(dir / "report")});
    CHECK(html.code == 0);
    CHECK(std::filesystem::exists(dir / "report" / "report.html"));
}

TEST_CASE("bench reads a TOML config and flags override it") {
    TempDir dir;
    polylab::write_text(dir / "bench.toml", R"(seed = 8
folds = 2
schedule_length = 2
families = ["forest"]
[forest]
tree_count = 3
max_features = ["all"]
[[dataset]]
name = "iris"
path = ")" + p(test_support::data_file("iris.csv")) + R"("
)");
    const Run r = run({"bench", "--config", p(dir / "bench.toml"), "--seed", "9", "--out", p(dir / "out")});
    REQUIRE(r.code == 0);
    CHECK(r.out.find("seed: 9") != std::string::npos);
    const auto records = polylab::read_records(dir / "out" / "records.jsonl");
    CHECK(records.size() == 4);
    for (const auto& rec : records) CHECK(rec.dataset == "iris");

    polylab::write_text(dir / "broken.toml", "folds = \"five\"\n");
    CHECK(run({"bench", "--config", p(dir / "broken.toml"), "--xor", "--out", p(dir / "broken")}).code == 2);
    CHECK(run({"bench", "--out", p(dir / "nothing")}).code == 2);
}

TEST_CASE("report on an empty log") {
    TempDir dir;
    polylab::write_text(dir / "empty.jsonl", "");
    const Run r = run({"report", "--records", p(dir / "empty.jsonl"), "--out", p(dir / "report")});
    CHECK(r.code == 0);
    CHECK(r.out.find("no records") != std::string::npos);
    CHECK(run({"plot", "--records", p(dir / "empty.jsonl"), "--out", p(dir / "plot")}).code == 2);
}
