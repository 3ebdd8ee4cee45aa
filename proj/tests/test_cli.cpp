#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include <oppshuffle/cli.hpp>

namespace fs = std::filesystem;
using namespace oppshuffle;

namespace {

struct result {
    int code;
    std::string out, err;
};

result run_cli(std::vector<std::string> args) {
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

void spit(const fs::path& p, const std::string& text) {
    std::ofstream(p, std::ios::binary) << text;
}

class CliTest : public ::testing::Test {
protected:
    void SetUp() override {
        std::random_device rd;
        dir_ = fs::temp_directory_path() / ("oppshuffle-cli-" + std::to_string(rd()));
        fs::create_directories(dir_);
    }
    void TearDown() override { fs::remove_all(dir_); }
    std::string path(const std::string& name) const { return (dir_ / name).string(); }

    fs::path dir_;
};

} // namespace

TEST(CliUnits, LengthsAndDurations) {
    EXPECT_DOUBLE_EQ(cli::parse_length_m("50"), 50.0);
    EXPECT_DOUBLE_EQ(cli::parse_length_m("50m"), 50.0);
    EXPECT_DOUBLE_EQ(cli::parse_length_m("0.05km"), 50.0);
    EXPECT_THROW(cli::parse_length_m("50ft"), invalid_parameter);
    EXPECT_THROW(cli::parse_length_m("-3m"), invalid_parameter);
    EXPECT_EQ(cli::parse_duration_s("1800"), 1800);
    EXPECT_EQ(cli::parse_duration_s("30min"), 1800);
    EXPECT_EQ(cli::parse_duration_s("0.5h"), 1800);
    EXPECT_EQ(cli::parse_duration_s("1d"), 86400);
    EXPECT_THROW(cli::parse_duration_s("soon"), invalid_parameter);
}

TEST(CliBasics, VersionAndUsageErrors) {
    const auto v = run_cli({"--version"});
    EXPECT_EQ(v.code, 0);
    EXPECT_EQ(v.out, "oppshuffle 1.0.0 (manifest schema 1)\n");
    EXPECT_EQ(run_cli({"simulate", "--bogus"}).code, 1);
    EXPECT_EQ(run_cli({"simulate", "--scenario", "sideways"}).code, 1);
    EXPECT_EQ(run_cli({}).code, 1);
}

TEST_F(CliTest, SimulateWritesOutputsAndIsReproducible) {
    const std::vector<std::string> base{"simulate", "--scenario", "best", "--trials", "300", "--rounds", "12",
                                        "--seed", "7", "--threads", "2"};
    auto a = base, b = base;
    a.insert(a.end(), {"--out", path("a")});
    b.insert(b.end(), {"--out", path("b")});
    const auto ra = run_cli(a);
    ASSERT_EQ(ra.code, 0) << ra.err;
    EXPECT_TRUE(ra.out.starts_with("scenario=best n=10 m=6 trials=300 seed=7 rounds_to_threshold(D<0.035)="))
        << ra.out;
    ASSERT_EQ(run_cli(b).code, 0);
    for (const char* f : {"tensor.csv", "series.csv", "item_series.csv", "config.txt", "manifest.json"})
        ASSERT_TRUE(fs::exists(dir_ / "a" / f)) << f;
    for (const char* f : {"tensor.csv", "series.csv", "item_series.csv"})
        EXPECT_EQ(slurp(dir_ / "a" / f), slurp(dir_ / "b" / f)) << f;

    const auto manifest = nlohmann::json::parse(slurp(dir_ / "a" / "manifest.json"));
    EXPECT_EQ(manifest["code_version"], "1.0.0");
    EXPECT_EQ(manifest["schema_version"], 1);
    EXPECT_EQ(manifest["config"]["trials"], 300);
    EXPECT_EQ(manifest["node_order"]["nodes"].size(), 10u);
    EXPECT_TRUE(manifest["results"]["final_aggregate_D"].is_number());
    EXPECT_DOUBLE_EQ(manifest["results"]["mean_closeness"].get<double>(), 1.0);
}

TEST_F(CliTest, ManifestAndConfigRoundTrip) {
    ASSERT_EQ(run_cli({"simulate", "--scenario", "intermediate", "--n", "5", "--m", "2", "--trials", "50", "--rounds",
                       "8", "--seed", "3", "--out", path("first")})
                  .code,
              0);
    const auto rerun = run_cli({"simulate", "--from-manifest", path("first/manifest.json"), "--out", path("second")});
    ASSERT_EQ(rerun.code, 0) << rerun.err;
    EXPECT_EQ(slurp(dir_ / "first" / "tensor.csv"), slurp(dir_ / "second" / "tensor.csv"));

    const auto from_config = run_cli({"simulate", "--config", path("first/config.txt"), "--out", path("third")});
    ASSERT_EQ(from_config.code, 0) << from_config.err;
    EXPECT_EQ(slurp(dir_ / "first" / "tensor.csv"), slurp(dir_ / "third" / "tensor.csv"));

    std::istringstream cfg(slurp(dir_ / "first" / "config.txt"));
    const auto spec = read_spec_config(cfg);
    EXPECT_EQ(spec_from_json(spec_to_json(spec)), spec);
    EXPECT_EQ(spec.kind, scenario::intermediate);
    EXPECT_EQ(spec.n, 5u);
}

TEST_F(CliTest, ConfigErrorsExitOne) {
    const auto r = run_cli({"simulate", "--scenario", "custom", "--out", path("x")});
    EXPECT_EQ(r.code, 1);
    EXPECT_NE(r.err.find("matrix"), std::string::npos);
    spit(path("bad.txt"), "scenario = best\ncolour = blue\n");
    EXPECT_EQ(run_cli({"simulate", "--config", path("bad.txt"), "--out", path("x")}).code, 1);
    EXPECT_EQ(run_cli({"simulate", "--scenario", "best", "--n", "1", "--out", path("x")}).code, 1);
}

TEST_F(CliTest, CustomMatrixScenario) {
    spit(path("m.csv"), "0,1,0\n0.5,0,0.5\n0,1,0\n");
    const auto r = run_cli({"simulate", "--scenario", "custom", "--matrix", path("m.csv"), "--n", "3", "--m", "2",
                            "--trials", "100", "--rounds", "5", "--out", path("c")});
    EXPECT_EQ(r.code, 0) << r.err;
    spit(path("bad.csv"), "0,1\n0.5,x\n");
    EXPECT_EQ(run_cli({"simulate", "--scenario", "custom", "--matrix", path("bad.csv"), "--n", "2", "--out",
                       path("c")})
                  .code,
              2);
    EXPECT_EQ(run_cli({"simulate", "--scenario", "custom", "--matrix", path("missing.csv"), "--out", path("c")}).code,
              2);
}

TEST_F(CliTest, TracesExtract) {
    std::ostringstream trace;
    trace << "# coords=xy\nuser,timestamp,x,y\n";
    for (int k = 0; k < 120; ++k)
        trace << "1," << 1704067200 + 60 * k << ",0,0\n2," << 1704067200 + 60 * k << ",10,0\n";
    spit(path("trace.csv"), trace.str());
    const auto r = run_cli({"traces", "extract", "--input", path("trace.csv"), "--output", path("events.csv")});
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_TRUE(r.out.starts_with("4 proximity events across 1 pairs\n")) << r.out;
    EXPECT_NE(r.out.find("\n2-4,1\n"), std::string::npos) << r.out;
    std::istringstream cache(slurp(path("events.csv")));
    EXPECT_EQ(read_event_cache(cache).size(), 4u);

    // a shorter cooldown gives more events
    const auto r2 = run_cli({"traces", "extract", "--input", path("trace.csv"), "--output", path("e2.csv"),
                             "--cooldown", "0.25h", "--radius", "0.011km"});
    ASSERT_EQ(r2.code, 0);
    EXPECT_TRUE(r2.out.starts_with("8 proximity events")) << r2.out;
}

TEST_F(CliTest, TracesExtractEmptyAndMalformed) {
    spit(path("empty.csv"), "user,timestamp,lat,lon\n");
    const auto r = run_cli({"traces", "extract", "--input", path("empty.csv"), "--output", path("e.csv")});
    EXPECT_EQ(r.code, 0);
    EXPECT_NE(r.err.find("warning"), std::string::npos);
    EXPECT_EQ(slurp(path("e.csv")), "user_a,user_b,timestamp,day\n");

    std::ostringstream bad;
    bad << "user,timestamp,lat,lon\n";
    for (int k = 0; k < 15; ++k)
        bad << "1," << 1000 + k << ",46.5,6.6\n";
    bad << "1,1016,46.5,north\n";
    spit(path("bad.csv"), bad.str());
    const auto b = run_cli({"traces", "extract", "--input", path("bad.csv"), "--output", path("e.csv")});
    EXPECT_EQ(b.code, 2);
    EXPECT_NE(b.err.find("line 17"), std::string::npos) << b.err;
    EXPECT_EQ(run_cli({"traces", "extract", "--input", path("nope.csv")}).code, 2);
    EXPECT_EQ(run_cli({"traces", "extract", "--input", path("empty.csv"), "--radius", "far"}).code, 1);
}

TEST_F(CliTest, CohortFromPathGraph) {
    // ten users on a line, each neighbouring pair meeting 12 times
    std::ostringstream ev;
    ev << "user_a,user_b,timestamp,day\n";
    for (int u = 1; u < 10; ++u)
        for (int k = 0; k < 12; ++k)
            ev << u << ',' << u + 1 << ',' << 1000 * k << ",0\n";
    spit(path("line.csv"), ev.str());
    const auto r = run_cli({"cohort", "--events", path("line.csv"), "--n", "10", "--count", "3", "--output",
                            path("c.json"), "--graph-output", path("g.csv")});
    ASSERT_EQ(r.code, 0) << r.err;
    const auto j = nlohmann::json::parse(slurp(path("c.json")));
    ASSERT_EQ(j.size(), 3u);
    for (const auto& c : j) {
        EXPECT_EQ(c["members"].size(), 10u);
        EXPECT_EQ(c["max_pair_hops"], 9);
        EXPECT_EQ(c["median_pair_hops"], 3);
        EXPECT_EQ(c["provenance"], "random-connected");
        EXPECT_EQ(cohort_from_json(c).hops, (hop_stats{9, 3}));
    }
    std::istringstream g(slurp(path("g.csv")));
    EXPECT_EQ(read_graph_cache(g).edge_count(), 9u);

    // the line's largest clique is an edge, too small for ten users
    const auto inf = run_cli({"cohort", "--events", path("line.csv"), "--mode", "clique", "--n", "10", "--output",
                              path("c2.json")});
    EXPECT_EQ(inf.code, 3);
    EXPECT_EQ(run_cli({"cohort", "--events", path("line.csv"), "--n", "11", "--output", path("c3.json")}).code, 3);
    EXPECT_EQ(run_cli({"cohort", "--events", path("line.csv"), "--mode", "ring"}).code, 1);
}

TEST_F(CliTest, CohortCliqueMode) {
    std::ostringstream ev;
    ev << "user_a,user_b,timestamp,day\n";
    for (int a = 1; a <= 10; ++a)
        for (int b = a + 1; b <= 10; ++b)
            if ((a <= 6 && b <= 6) || (a >= 5 && b >= 5))
                for (int k = 0; k < 10; ++k)
                    ev << a << ',' << b << ',' << k << ",0\n";
    spit(path("groups.csv"), ev.str());
    const auto r = run_cli({"cohort", "--events", path("groups.csv"), "--mode", "clique", "--n", "10", "--output",
                            path("c.json")});
    ASSERT_EQ(r.code, 0) << r.err;
    const auto j = nlohmann::json::parse(slurp(path("c.json")));
    EXPECT_EQ(j[0]["provenance"], "clique-combined");
    EXPECT_EQ(j[0]["max_pair_hops"], 2);
}

TEST_F(CliTest, Calibrate) {
    EXPECT_EQ(run_cli({"calibrate", "--scenario", "best", "--output", path("cal.csv")}).code, 1);
    const auto r = run_cli({"calibrate", "--scenario", "best", "--scenario", "worst", "--trials", "200",
                            "--rounds", "30", "--ks-threshold", "0.5", "--output", path("cal.csv")});
    ASSERT_EQ(r.code, 0) << r.err;
    std::istringstream in(slurp(path("cal.csv")));
    const auto table = read_calibration_csv(in);
    ASSERT_EQ(table.size(), 2u);
    EXPECT_DOUBLE_EQ(table[0].centrality, 1.0);
    EXPECT_LE(table[0].rounds, 2u);
    EXPECT_NEAR(table[1].centrality, 0.2854, 1e-4);
    EXPECT_GT(table[1].rounds, table[0].rounds);

    const auto slow = run_cli({"calibrate", "--scenario", "best", "--scenario", "worst", "--trials", "100",
                               "--rounds", "3", "--output", path("cal2.csv")});
    ASSERT_EQ(slow.code, 0);
    EXPECT_NE(slow.err.find("warning: scenario 'worst'"), std::string::npos);
    EXPECT_NE(slurp(path("cal2.csv")).find(",none\n"), std::string::npos);
}

TEST_F(CliTest, TraceScenarioNeedsEvents) {
    EXPECT_EQ(run_cli({"simulate", "--scenario", "trace-random", "--out", path("t")}).code, 1);
    EXPECT_EQ(run_cli({"simulate", "--scenario", "trace-random", "--events", path("none.csv"), "--out", path("t")})
                  .code,
              2);
}
