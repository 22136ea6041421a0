#include <gtest/gtest.h>

#include <sys/wait.h>
#include <unistd.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "glda/ingest.hpp"
#include "glda/io.hpp"

using namespace glda;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

class Cli : public ::testing::Test {
protected:
    fs::path dir;

    void SetUp() override {
        const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
        dir = fs::temp_directory_path() /
              ("glda_cli_" + std::to_string(::getpid()) + "_" + info->name());
        fs::remove_all(dir);
        fs::create_directories(dir);
    }
    void TearDown() override { fs::remove_all(dir); }

    // Runs the CLI inside `dir`; returns the exit code.
    int run(const std::string& args) {
        const std::string cmd = "cd '" + dir.string() + "' && '" GLDA_CLI_PATH "' " + args + " > stdout.txt 2> stderr.txt";
        const int status = std::system(cmd.c_str());
        return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    }
    std::string out() const { return slurp(dir / "stdout.txt"); }
    std::string err() const { return slurp(dir / "stderr.txt"); }
    fs::path at(const std::string& name) const { return dir / name; }

    void simulate(const std::string& extra = "") {
        ASSERT_EQ(run("simulate --seed 5 --m 15 --obs 40 --out sim " + extra), 0) << err();
    }
    void fit_glda(const std::string& out = "glda.json") {
        ASSERT_EQ(run("fit --cohort sim/cohort.csv --k 3 --iters 150 --warmup 50 --seed 5 --out " + out), 0) << err();
    }
};

} // namespace

TEST_F(Cli, SimulateRoundTripsThroughIngest) {
    simulate();
    const CohortDataset d = load_cohort(at("sim/cohort.csv").string());
    EXPECT_EQ(d.n_subjects(), 15);
    EXPECT_EQ(d.n_obs(), 600);
    EXPECT_EQ(d.n_vars(), 4);
    EXPECT_TRUE(d.has_timestamps());
    const OutcomeTable o = load_outcomes(at("sim/outcomes.csv").string());
    EXPECT_EQ(o.n_outcomes(), 3);
    std::ostringstream again;
    write_cohort(again, d);
    EXPECT_EQ(again.str(), slurp(at("sim/cohort.csv")));
    const Json truth = Json::parse(slurp(at("sim/truth.json")));
    EXPECT_EQ(truth["theta"].size(), 15u);
}

TEST_F(Cli, AlphaControlsSpreadOfTrueWeights) {
    auto spread = [&](const std::string& alpha) {
        EXPECT_EQ(run("simulate --seed 6 --m 40 --obs 5 --alpha " + alpha + " --out s" + alpha), 0) << err();
        const Eigen::MatrixXd theta = matrix_from_json(Json::parse(slurp(at("s" + alpha + "/truth.json")))["theta"], "theta");
        const Eigen::RowVectorXd mean = theta.colwise().mean();
        return (theta.rowwise() - mean).squaredNorm() / theta.rows();
    };
    const double hetero = spread("0.2");
    const double homo = spread("100");
    EXPECT_GT(hetero, 20.0 * homo);
}

TEST_F(Cli, FitAssignValidatePipeline) {
    simulate();
    fit_glda();
    const Json fit = Json::parse(slurp(at("glda.json")));
    EXPECT_EQ(fit["model"], "glda");
    EXPECT_EQ(fit["config"]["k"], 3);
    EXPECT_EQ(fit["config"]["seed"], 5);
    EXPECT_EQ(fit["theta"].size(), 15u);
    EXPECT_TRUE(fit["diagnostics"]["max_split_rhat"].is_number());

    ASSERT_EQ(run("assign --fit glda.json --cohort sim/cohort.csv --out assign.csv"), 0) << err();
    std::istringstream assign(slurp(at("assign.csv")));
    std::string line;
    std::getline(assign, line);
    EXPECT_EQ(line, "subject,timestamp,label,resp_0,resp_1,resp_2");
    int rows = 0;
    while (std::getline(assign, line)) {
        ++rows;
        std::vector<std::string> cells;
        std::stringstream ls(line);
        for (std::string c; std::getline(ls, c, ',');) cells.push_back(c);
        ASSERT_EQ(cells.size(), 6u);
        EXPECT_NEAR(std::stod(cells[3]) + std::stod(cells[4]) + std::stod(cells[5]), 1.0, 1e-9);
    }
    EXPECT_EQ(rows, 600);

    ASSERT_EQ(run("validate --fit glda.json --outcomes sim/outcomes.csv --out validation.json"), 0) << err();
    const Json v = Json::parse(slurp(at("validation.json")));
    EXPECT_EQ(v["results"].size(), 9u);
    EXPECT_NE(out().find("bands:"), std::string::npos);
}

TEST_F(Cli, AssignSubjectFilterAndSeries) {
    simulate();
    fit_glda();
    ASSERT_EQ(run("assign --fit glda.json --cohort sim/cohort.csv --subject S003 --subject S007 --series-dir series --out a.csv"),
              0)
        << err();
    std::istringstream in(slurp(at("a.csv")));
    std::string line;
    std::getline(in, line);
    int rows = 0;
    while (std::getline(in, line)) {
        ++rows;
        const std::string subject = line.substr(0, line.find(','));
        EXPECT_TRUE(subject == "S003" || subject == "S007") << subject;
    }
    EXPECT_EQ(rows, 80);
    EXPECT_TRUE(fs::exists(at("series/S003.csv")));
    EXPECT_TRUE(fs::exists(at("series/S007.csv")));
    EXPECT_FALSE(fs::exists(at("series/S001.csv")));
}

TEST_F(Cli, CompareProducesEighteenCellGrid) {
    simulate();
    fit_glda();
    ASSERT_EQ(run("fit --cohort sim/cohort.csv --model gmm --k 3 --seed 5 --out gmm.json"), 0) << err();
    const Json g = Json::parse(slurp(at("gmm.json")));
    EXPECT_EQ(g["model"], "gmm");
    EXPECT_EQ(g["proportions"].size(), 15u);
    ASSERT_EQ(run("compare --fit glda.json --fit gmm.json --outcomes sim/outcomes.csv --out cmp.json"), 0) << err();
    const Json c = Json::parse(slurp(at("cmp.json")));
    ASSERT_EQ(c["cells"].size(), 9u);
    int regressions = 0;
    for (const auto& cell : c["cells"]) regressions += cell.contains("glda") + cell.contains("gmm");
    EXPECT_EQ(regressions, 18);
    EXPECT_EQ(c["models"], Json::parse(R"(["glda","gmm"])"));
    // 2 models x 3 classes rows in the printed grid.
    std::istringstream text(out());
    int grid_rows = 0;
    for (std::string line; std::getline(text, line);)
        grid_rows += line.rfind("glda ", 0) == 0 || line.rfind("gmm ", 0) == 0;
    EXPECT_EQ(grid_rows, 6);
}

TEST_F(Cli, CommandsAreDeterministic) {
    simulate();
    const std::string cohort = slurp(at("sim/cohort.csv"));
    ASSERT_EQ(run("simulate --seed 5 --m 15 --obs 40 --out sim2"), 0);
    EXPECT_EQ(cohort, slurp(at("sim2/cohort.csv")));
    EXPECT_EQ(slurp(at("sim/truth.json")), slurp(at("sim2/truth.json")));
    fit_glda("a.json");
    fit_glda("b.json");
    EXPECT_EQ(slurp(at("a.json")), slurp(at("b.json")));
    ASSERT_EQ(run("fit --cohort sim/cohort.csv --model gmm --k 3 --seed 5 --out g1.json"), 0);
    ASSERT_EQ(run("fit --cohort sim/cohort.csv --model gmm --k 3 --seed 5 --out g2.json"), 0);
    EXPECT_EQ(slurp(at("g1.json")), slurp(at("g2.json")));
}

TEST_F(Cli, SeedChangesFit) {
    simulate();
    fit_glda("a.json");
    ASSERT_EQ(run("fit --cohort sim/cohort.csv --k 3 --iters 150 --warmup 50 --seed 6 --out b.json"), 0);
    EXPECT_NE(slurp(at("a.json")), slurp(at("b.json")));
}

TEST_F(Cli, ConfigFileAndFlagPrecedence) {
    simulate();
    {
        std::ofstream cfg(at("fit.toml"));
        cfg << "[fit]\nk = 2\niters = 120\nwarmup = 20\nseed = 5\n";
    }
    ASSERT_EQ(run("--config fit.toml fit --cohort sim/cohort.csv --out c.json"), 0) << err();
    Json j = Json::parse(slurp(at("c.json")));
    EXPECT_EQ(j["config"]["k"], 2);
    EXPECT_EQ(j["config"]["iters"], 120);
    ASSERT_EQ(run("--config fit.toml fit --cohort sim/cohort.csv --k 3 --out d.json"), 0) << err();
    j = Json::parse(slurp(at("d.json")));
    EXPECT_EQ(j["config"]["k"], 3);
    EXPECT_EQ(j["config"]["iters"], 120);
}

TEST_F(Cli, InputErrorsExitTwo) {
    EXPECT_EQ(run("fit --cohort missing.csv --k 3"), 2);
    EXPECT_NE(err().find("missing.csv"), std::string::npos);
    EXPECT_EQ(run("fit --k 3"), 2); // --cohort required
    EXPECT_EQ(run("frobnicate"), 2);
    EXPECT_EQ(run(""), 2);
    {
        std::ofstream bad(at("bad.csv"));
        bad << "subject,x\na,1\na,oops\n";
    }
    EXPECT_EQ(run("fit --cohort bad.csv --k 1"), 2);
    EXPECT_NE(err().find("oops"), std::string::npos);
    simulate();
    EXPECT_EQ(run("fit --cohort sim/cohort.csv --k 0"), 2);
    EXPECT_EQ(run("fit --cohort sim/cohort.csv --k 2 --iters 10 --warmup 10"), 2);
    EXPECT_EQ(run("simulate --alpha 0 --out x"), 2);
    fit_glda();
    EXPECT_EQ(run("compare --fit glda.json --outcomes sim/outcomes.csv"), 2);
    ASSERT_EQ(run("fit --cohort sim/cohort.csv --k 2 --iters 60 --warmup 10 --out k2.json"), 0);
    EXPECT_EQ(run("compare --fit glda.json --fit k2.json --outcomes sim/outcomes.csv"), 2);
    EXPECT_NE(err().find("K"), std::string::npos);
}

TEST_F(Cli, NumericalFailureExitsThree) {
    {
        std::ofstream huge(at("huge.csv"));
        huge << "subject,x,y\n";
        for (int i = 1; i <= 10; ++i) huge << "a," << i << "e200,-" << i << "e200\nb,-" << i << "e200," << i << "e199\n";
    }
    EXPECT_EQ(run("fit --cohort huge.csv --k 2 --iters 20 --warmup 5 --no-standardize"), 3);
    EXPECT_EQ(run("fit --cohort huge.csv --k 2 --model gmm"), 3);
    EXPECT_NE(err().find("numerical"), std::string::npos);
}

TEST_F(Cli, HelpExitsZero) { EXPECT_EQ(run("--help"), 0); }

TEST_F(Cli, TabDelimitedInput) {
    simulate();
    const CohortDataset d = load_cohort(at("sim/cohort.csv").string());
    {
        std::ofstream tsv(at("cohort.tsv"));
        write_cohort(tsv, d, '\t');
    }
    ASSERT_EQ(run("fit --cohort cohort.tsv --delimiter tab --k 2 --iters 60 --warmup 10 --out t.json"), 0) << err();
    ASSERT_EQ(run("fit --cohort sim/cohort.csv --k 2 --iters 60 --warmup 10 --out c.json"), 0) << err();
    Json a = Json::parse(slurp(at("t.json"))), b = Json::parse(slurp(at("c.json")));
    EXPECT_EQ(a["theta"], b["theta"]);
}
