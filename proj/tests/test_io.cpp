#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <set>
#include <string>
#include <tuple>
#include <vector>

#include "infovgae/io.hpp"
#include "infovgae/rng.hpp"

using namespace infovgae;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
    fs::path dir = fs::temp_directory_path() / "infovgae_io_tests" / name;
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

std::string put(const fs::path& dir, const std::string& name, const std::string& content) {
    fs::path p = dir / name;
    write_file_atomic(p.string(), content);
    return p.string();
}

using RecTuple = std::tuple<std::string, std::string, std::string, double>;

std::vector<RecTuple> tuples(const std::vector<InteractionRecord>& recs) {
    std::vector<RecTuple> out;
    for (const auto& r : recs) out.emplace_back(r.user, r.claim, r.relation, r.weight);
    return out;
}

} // namespace

TEST_CASE("edge list loading") {
    fs::path dir = scratch("edgelist");

    SECTION("bundled toy graph matches its in-test definition") {
        std::vector<InteractionRecord> recs =
            load_edgelist(std::string(INFOVGAE_SOURCE_DIR) + "/data/toy_two_block.tsv");
        CHECK(tuples(recs) == std::vector<RecTuple>{{"u0", "c0", "act", 1.0},
                                                    {"u0", "c1", "act", 1.0},
                                                    {"u1", "c2", "act", 1.0},
                                                    {"u1", "c3", "act", 1.0}});
    }
    SECTION("header-only file yields no records") {
        CHECK(load_edgelist(put(dir, "empty.tsv", "user_id\tclaim_id\trelation\tweight\n"))
                  .empty());
    }
    SECTION("weight column is optional per row") {
        std::vector<InteractionRecord> recs = load_edgelist(
            put(dir, "mixed.tsv",
                "user_id\tclaim_id\trelation\tweight\n"
                "a\tb\tr\n"
                "a\tc\tr\t2.5\n"));
        REQUIRE(recs.size() == 2);
        CHECK(recs[0].weight == 1.0);
        CHECK(recs[1].weight == 2.5);
    }
    SECTION("comments, blank lines, and CRLF are tolerated") {
        std::vector<InteractionRecord> recs = load_edgelist(
            put(dir, "noisy.tsv",
                "# preamble\r\n\nuser_id\tclaim_id\trelation\tweight\r\n"
                "# mid comment\n"
                "a\tb\tr\t1\r\n\n"));
        REQUIRE(recs.size() == 1);
        CHECK(recs[0].user == "a");
    }
    SECTION("malformed input names the offending line") {
        std::string two_fields = put(dir, "bad1.tsv",
                                     "user_id\tclaim_id\trelation\tweight\n"
                                     "a\tb\n");
        CHECK_THROWS_MATCHES(load_edgelist(two_fields), DataError,
                             Catch::Matchers::MessageMatches(
                                 Catch::Matchers::ContainsSubstring("bad1.tsv:2")));
        CHECK_THROWS_AS(load_edgelist(put(dir, "bad2.tsv",
                                          "user_id\tclaim_id\trelation\tweight\n"
                                          "a\tb\tr\tNOPE\n")),
                        DataError);
        CHECK_THROWS_AS(load_edgelist(put(dir, "bad3.tsv",
                                          "user_id\tclaim_id\trelation\tweight\n"
                                          "a\tb\tr\t-1\n")),
                        DataError);
        CHECK_THROWS_AS(load_edgelist(put(dir, "bad4.tsv",
                                          "user_id\tclaim_id\trelation\tweight\n"
                                          "\tb\tr\t1\n")),
                        DataError);
        CHECK_THROWS_AS(load_edgelist(put(dir, "bad5.tsv", "a\tb\tr\t1\n")), DataError);
        CHECK_THROWS_AS(load_edgelist(put(dir, "bad6.tsv", "")), DataError);
        CHECK_THROWS_AS(load_edgelist((dir / "missing.tsv").string()), IoError);
    }
}

TEST_CASE("edge list writing") {
    fs::path dir = scratch("edgelist_w");

    SECTION("writer output loads back exactly, including awkward identifiers") {
        std::vector<InteractionRecord> recs{
            {"user with space", "claim,comma", "re\"quote", 0.1},
            {"plain", "c", "r", 12345.678901234567},
        };
        std::string path = (dir / "out.tsv").string();
        write_edgelist(path, recs);
        CHECK(tuples(load_edgelist(path)) == tuples(recs));
    }
    SECTION("records outside the grammar are rejected") {
        CHECK_THROWS_AS(format_edgelist({{"a\tb", "c", "r", 1.0}}), DataError);
        CHECK_THROWS_AS(format_edgelist({{"a", "c\nd", "r", 1.0}}), DataError);
        CHECK_THROWS_AS(format_edgelist({{"#lead", "c", "r", 1.0}}), DataError);
        CHECK_THROWS_AS(format_edgelist({{"a", "", "r", 1.0}}), DataError);
        CHECK_THROWS_AS(format_edgelist({{"a", "c", "r", -2.0}}), DataError);
        double inf = std::numeric_limits<double>::infinity();
        CHECK_THROWS_AS(format_edgelist({{"a", "c", "r", inf}}), DataError);
    }
    SECTION("1000 random in-grammar records round-trip exactly") {
        const std::string alphabet =
            "abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789 ,.'\"()/|_-";
        Rng rng(2024);
        auto token = [&]() {
            std::size_t len = 1 + static_cast<std::size_t>(rng.uniform() * 12);
            std::string s;
            for (std::size_t i = 0; i < len; ++i)
                s += alphabet[static_cast<std::size_t>(rng.uniform() * alphabet.size())];
            return s;
        };
        std::vector<InteractionRecord> recs;
        for (int i = 0; i < 1000; ++i) {
            InteractionRecord r{token(), token(), token(), std::exp(rng.normal() * 3.0)};
            if (r.user[0] == '#') r.user[0] = 'x';
            recs.push_back(std::move(r));
        }
        std::string path = (dir / "fuzz.tsv").string();
        write_edgelist(path, recs);
        CHECK(tuples(load_edgelist(path)) == tuples(recs));
    }
}

TEST_CASE("label and ideology side files") {
    fs::path dir = scratch("labels");

    SECTION("label rows parse with later rows winning") {
        std::map<std::string, std::string> m = load_labels(
            put(dir, "l.tsv", "# c\nu0\tleft\nu1\tright\nu0\tswapped\n"));
        CHECK(m == std::map<std::string, std::string>{{"u0", "swapped"}, {"u1", "right"}});
    }
    SECTION("label writer round-trips and rejects off-grammar entries") {
        std::map<std::string, std::string> m{{"a b", "x,y"}, {"z", "w"}};
        std::string path = (dir / "out.tsv").string();
        write_labels(path, m);
        CHECK(load_labels(path) == m);
        CHECK_THROWS_AS(format_labels({{"a\tb", "x"}}), DataError);
        CHECK_THROWS_AS(format_labels({{"#a", "x"}}), DataError);
        CHECK_THROWS_AS(format_labels({{"a", ""}}), DataError);
    }
    SECTION("malformed label rows are rejected") {
        CHECK_THROWS_AS(load_labels(put(dir, "bad.tsv", "u0\n")), DataError);
        CHECK_THROWS_AS(load_labels(put(dir, "bad2.tsv", "u0\ta\tb\n")), DataError);
    }
    SECTION("ideology values parse as reals") {
        std::map<std::string, double> m =
            load_ideology(put(dir, "i.tsv", "u0\t-0.75\nu1\t0.5\n"));
        CHECK(m.at("u0") == -0.75);
        CHECK(m.at("u1") == 0.5);
        CHECK_THROWS_AS(load_ideology(put(dir, "ibad.tsv", "u0\tx\n")), DataError);
        CHECK_THROWS_AS(load_ideology(put(dir, "ibad2.tsv", "u0\tinf\n")), DataError);
    }
}

TEST_CASE("label sets and ideology vectors align to graph indices") {
    Bhin g = build_bhin({{"u0", "c0", "act", 1.0},
                         {"u1", "c0", "act", 1.0},
                         {"u2", "c1", "act", 1.0}},
                        1);
    REQUIRE(g.num_users() == 3);
    REQUIRE(g.num_claims() == 2);

    SECTION("class ids follow sorted distinct applied labels") {
        LabelSet set = make_label_set(g, {{"u0", "200"}, {"u2", "100"}, {"ghost", "999"}},
                                      {{"c1", "100"}});
        CHECK(set.class_names == std::vector<std::string>{"100", "200"});
        CHECK(set.label == std::vector<int>{1, -1, 0, -1, 0});
        CHECK(set.num_classes() == 2);
    }
    SECTION("labels only seen on dropped ids claim no class slot") {
        LabelSet set = make_label_set(g, {{"u0", "b"}}, {{"nope", "a"}});
        CHECK(set.class_names == std::vector<std::string>{"b"});
    }
    SECTION("ideology vector is NaN where a node has no value") {
        std::vector<double> v = ideology_vector(g, {{"u1", 2.0}, {"c0", -1.0}});
        REQUIRE(v.size() == 5);
        CHECK(std::isnan(v[0]));
        CHECK(v[1] == 2.0);
        CHECK(v[3] == -1.0);
        CHECK(std::isnan(v[4]));
    }
}

TEST_CASE("roll-call ingestion") {
    fs::path dir = scratch("rollcall");
    std::string members = put(dir, "members.csv",
                              "member_id,party\n"
                              "mA,100\nmB,100\nmC,200\nmD,328\n");

    SECTION("votes become categorized records and majority labels") {
        std::string votes = put(dir, "votes.csv",
                                "member_id,bill_id,cast\n"
                                "mA,b1,1\n"  // yea
                                "mB,b1,2\n"  // yea (paired)
                                "mC,b1,6\n"  // nay
                                "mA,b2,4\n"  // nay
                                "mC,b2,1\n"  // yea
                                "mB,b2,9\n"  // abstain
                                "mD,b1,1\n"  // third party: dropped
                                "mA,b3,0\n"  // not-in-congress: skipped
                                "mB,b3,1\nmC,b3,3\n"); // yea tie across parties
        RollcallData rc = load_rollcall(members, votes);
        CHECK(tuples(rc.records) == std::vector<RecTuple>{{"mA", "b1", "yea", 1.0},
                                                          {"mB", "b1", "yea", 1.0},
                                                          {"mC", "b1", "nay", 1.0},
                                                          {"mA", "b2", "nay", 1.0},
                                                          {"mC", "b2", "yea", 1.0},
                                                          {"mB", "b2", "abstain", 1.0},
                                                          {"mB", "b3", "yea", 1.0},
                                                          {"mC", "b3", "yea", 1.0}});
        CHECK(rc.user_labels ==
              std::map<std::string, std::string>{{"mA", "100"}, {"mB", "100"}, {"mC", "200"}});
        // b1: yea 100 x2 vs 200 x0 -> 100; b2: 200 x1 -> 200; b3: 1 vs 1 tie -> none.
        CHECK(rc.claim_labels ==
              std::map<std::string, std::string>{{"b1", "100"}, {"b2", "200"}});
    }
    SECTION("textual casts pass through the default map") {
        std::string votes = put(dir, "votes_t.csv",
                                "member_id,bill_id,cast\nmA,b1,yea\nmC,b1,nay\n");
        RollcallData rc = load_rollcall(members, votes);
        REQUIRE(rc.records.size() == 2);
        CHECK(rc.records[0].relation == "yea");
        CHECK(rc.records[1].relation == "nay");
    }
    SECTION("unknown cast codes reject by default and skip on request") {
        std::string votes =
            put(dir, "votes_u.csv", "member_id,bill_id,cast\nmA,b1,77\nmC,b1,1\n");
        CHECK_THROWS_AS(load_rollcall(members, votes), DataError);
        RollcallOptions opts;
        opts.skip_unknown_cast = true;
        RollcallData rc = load_rollcall(members, votes, opts);
        REQUIRE(rc.records.size() == 1);
        CHECK(rc.records[0].user == "mC");
    }
    SECTION("votes by unlisted members are an error") {
        std::string votes = put(dir, "votes_g.csv", "member_id,bill_id,cast\nmZ,b1,1\n");
        CHECK_THROWS_MATCHES(load_rollcall(members, votes), DataError,
                             Catch::Matchers::MessageMatches(
                                 Catch::Matchers::ContainsSubstring("mZ")));
    }
    SECTION("the party filter is configurable") {
        std::string votes = put(dir, "votes_p.csv", "member_id,bill_id,cast\nmD,b1,1\n");
        RollcallOptions opts;
        opts.parties = {"328"};
        RollcallData rc = load_rollcall(members, votes, opts);
        REQUIRE(rc.records.size() == 1);
        CHECK(rc.user_labels.at("mD") == "328");
    }
    SECTION("header mismatches are rejected") {
        CHECK_THROWS_AS(
            load_rollcall(put(dir, "mh.csv", "id,party\nmA,100\n"),
                          put(dir, "vh.csv", "member_id,bill_id,cast\n")),
            DataError);
        CHECK_THROWS_AS(load_rollcall(members, put(dir, "vh2.csv", "a,b\n")), DataError);
    }
}

TEST_CASE("synthetic two-block generation") {
    SECTION("extreme probabilities give exactly the within-block biclique") {
        SyntheticData d = generate_synthetic(4, 6, 1.0, 0.0, 7);
        std::set<std::pair<std::string, std::string>> got;
        for (const auto& r : d.records) {
            CHECK(r.relation == "act");
            got.emplace(r.user, r.claim);
        }
        std::set<std::pair<std::string, std::string>> want;
        for (int u = 0; u < 4; ++u)
            for (int c = 0; c < 6; ++c)
                if ((u < 2) == (c < 3))
                    want.emplace("u" + std::to_string(u), "c" + std::to_string(c));
        CHECK(got == want);
        CHECK(d.user_labels.at("u0") == "0");
        CHECK(d.user_labels.at("u3") == "1");
        CHECK(d.claim_labels.at("c2") == "0");
        CHECK(d.claim_labels.at("c3") == "1");
    }
    SECTION("the record stream is a pure function of the seed") {
        SyntheticData a = generate_synthetic(12, 17, 0.4, 0.05, 99);
        SyntheticData b = generate_synthetic(12, 17, 0.4, 0.05, 99);
        SyntheticData c = generate_synthetic(12, 17, 0.4, 0.05, 100);
        CHECK(format_edgelist(a.records) == format_edgelist(b.records));
        CHECK(format_edgelist(a.records) != format_edgelist(c.records));
    }
    SECTION("edge counts match the sampling probabilities within 3 sigma") {
        SyntheticData d = generate_synthetic(40, 60, 0.3, 0.02, 5);
        double mean = 1200 * 0.3 + 1200 * 0.02;
        double sigma = std::sqrt(1200 * 0.3 * 0.7 + 1200 * 0.02 * 0.98);
        CHECK(std::abs(static_cast<double>(d.records.size()) - mean) <= 3.0 * sigma);
    }
    SECTION("bad parameters are rejected") {
        CHECK_THROWS_AS(generate_synthetic(4, 4, 1.5, 0.0, 1), ConfigError);
        CHECK_THROWS_AS(generate_synthetic(4, 4, 0.5, -0.1, 1), ConfigError);
        CHECK_THROWS_AS(generate_synthetic(0, 4, 0.5, 0.1, 1), ConfigError);
    }
}

TEST_CASE("scatter emission") {
    fs::path dir = scratch("scatter");
    Bhin g = build_bhin({{"u0", "c0", "act", 1.0}, {"u1", "c0", "act", 1.0}}, 1);
    DenseMatrix z(3, 3);
    z(0, 0) = 1.25; z(0, 1) = 0.0;  z(0, 2) = 0.5;
    z(1, 0) = 0.0;  z(1, 1) = 2.0;  z(1, 2) = 0.125;
    z(2, 0) = 0.5;  z(2, 1) = 0.75; z(2, 2) = 0.0;
    AxisSelection axes = select_axes(z, 2);
    REQUIRE(axes.selected == std::vector<std::size_t>{1, 0});

    LabelSet labels;
    labels.class_names = {"le,ft", "right"};
    labels.label = {0, 1, -1};

    SECTION("CSV rows carry ids, node types, selected coordinates, and labels") {
        std::string csv_path = (dir / "s.csv").string();
        emit_scatter(csv_path, "", z, axes, g, labels);
        CHECK(read_file(csv_path) ==
              "node_id,node_type,x,y,label\n"
              "u0,user,0.000000,1.250000,\"le,ft\"\n"
              "u1,user,2.000000,0.000000,right\n"
              "c0,claim,0.750000,0.500000,-\n");
    }
    SECTION("the SVG is self-contained with one mark per node and the diagonal") {
        std::string svg_path = (dir / "s.svg").string();
        emit_scatter((dir / "s2.csv").string(), svg_path, z, axes, g, labels);
        std::string svg = read_file(svg_path);
        CHECK(svg.rfind("<svg", 0) == 0);
        std::size_t circles = 0, rects = 0, pos = 0;
        while ((pos = svg.find("<circle", pos)) != std::string::npos) ++circles, ++pos;
        pos = 0;
        while ((pos = svg.find("<rect", pos)) != std::string::npos) ++rects, ++pos;
        CHECK(circles == g.num_users());
        CHECK(rects == g.num_claims() + 1); // background plus one per claim
        CHECK(svg.find("stroke-dasharray") != std::string::npos);
        CHECK(svg.find("#1f77b4") != std::string::npos);
        CHECK(svg.find("#d62728") != std::string::npos);
        CHECK(svg.find("#999999") != std::string::npos);
    }
    SECTION("fewer than two selected axes cannot be plotted") {
        AxisSelection one = select_axes(z, 1);
        CHECK_THROWS_AS(emit_scatter((dir / "x.csv").string(), "", z, one, g, labels),
                        ContractError);
    }
}

TEST_CASE("checkpoint container") {
    fs::path dir = scratch("checkpoint");
    Rng rng(31);
    EncoderParams enc;
    enc.layers = {{glorot_uniform(6, 4, rng), glorot_uniform(6, 4, rng)},
                  {glorot_uniform(4, 3, rng), glorot_uniform(4, 3, rng)}};
    enc.head_mu = glorot_uniform(3, 2, rng);
    enc.head_sigma = glorot_uniform(3, 2, rng);
    DiscriminatorParams disc = init_discriminator(2, 5, rng);
    nlohmann::ordered_json echo = {{"seed", 31}, {"model", {{"latent_dim", 2}}}};

    SECTION("matrices and config echo round-trip bitwise") {
        Checkpoint ckpt = make_checkpoint(enc, &disc, echo);
        std::string path = (dir / "m.ckpt").string();
        save_checkpoint(path, ckpt);
        Checkpoint back = load_checkpoint(path);
        CHECK(back.config == ckpt.config);
        REQUIRE(back.matrices.size() == ckpt.matrices.size());
        for (std::size_t i = 0; i < ckpt.matrices.size(); ++i) {
            CHECK(back.matrices[i].first == ckpt.matrices[i].first);
            CHECK(back.matrices[i].second.data == ckpt.matrices[i].second.data);
        }
        EncoderParams enc2 = encoder_from_checkpoint(back);
        REQUIRE(enc2.layers.size() == 2);
        REQUIRE(enc2.layers[0].size() == 2);
        CHECK(enc2.layers[1][0].data == enc.layers[1][0].data);
        CHECK(enc2.head_sigma.data == enc.head_sigma.data);
    }
    SECTION("a discriminator-free checkpoint still restores the encoder") {
        std::string path = (dir / "nodisc.ckpt").string();
        save_checkpoint(path, make_checkpoint(enc, nullptr, echo));
        Checkpoint back = load_checkpoint(path);
        CHECK(back.find("disc_w1") == nullptr);
        CHECK_NOTHROW(encoder_from_checkpoint(back));
    }
    SECTION("corruption is diagnosed, not crashed on") {
        std::string path = (dir / "m2.ckpt").string();
        save_checkpoint(path, make_checkpoint(enc, &disc, echo));
        std::string text = read_file(path);

        write_file_atomic((dir / "bad_magic").string(), "XVGAE9\n" + text.substr(7));
        CHECK_THROWS_AS(load_checkpoint((dir / "bad_magic").string()), DataError);

        write_file_atomic((dir / "trunc").string(), text.substr(0, text.size() / 2));
        CHECK_THROWS_AS(load_checkpoint((dir / "trunc").string()), DataError);

        write_file_atomic((dir / "empty").string(), "");
        CHECK_THROWS_AS(load_checkpoint((dir / "empty").string()), DataError);
        CHECK_THROWS_AS(load_checkpoint((dir / "gone").string()), IoError);
    }
    SECTION("non-finite weights cannot be saved") {
        EncoderParams broken = enc;
        broken.head_mu(0, 0) = std::numeric_limits<double>::quiet_NaN();
        CHECK_THROWS_AS(
            save_checkpoint((dir / "nan.ckpt").string(), make_checkpoint(broken, nullptr, echo)),
            NumericError);
    }
    SECTION("a checkpoint missing encoder heads is incomplete") {
        Checkpoint ckpt = make_checkpoint(enc, nullptr, echo);
        ckpt.matrices.pop_back(); // drops head_sigma
        std::string path = (dir / "incomplete.ckpt").string();
        save_checkpoint(path, ckpt);
        CHECK_THROWS_AS(encoder_from_checkpoint(load_checkpoint(path)), DataError);
    }
}

TEST_CASE("trace and metrics writers") {
    fs::path dir = scratch("writers");

    SECTION("training trace serializes with exact headers and values") {
        TrainTrace trace;
        trace.rows.push_back({0, 2.5, 0.25, 1.0, -0.5, 0.75, 3.5});
        trace.rows.push_back({1, 1.25, 0.125, 0.5, 0.0, 0.5, 4.0});
        std::string path = (dir / "trace.csv").string();
        write_trace_csv(path, trace);
        CHECK(read_file(path) ==
              "step,recon,kl,beta,tc,disc,wall_ms\n"
              "0,2.5,0.25,1,-0.5,0.75,3.5\n"
              "1,1.25,0.125,0.5,0,0.5,4\n");
    }
    SECTION("controller trace serializes with exact headers and values") {
        std::string path = (dir / "ctrl.csv").string();
        write_controller_trace_csv(path, {{0, 0.5, 0.25, 1.0}, {1, 0.75, 0.0, 0.5}});
        CHECK(read_file(path) == "step,kl_actual,error,beta\n"
                                 "0,0.5,0.25,1\n"
                                 "1,0.75,0,0.5\n");
    }
    SECTION("metrics reports keep a fixed key order in both formats") {
        MetricsReport rep;
        rep.user_precision = 0.5;
        rep.user_recall = 0.25;
        rep.user_f1 = 1.0 / 3.0;
        rep.claim_precision = 1.0;
        rep.claim_recall = 0.75;
        rep.claim_f1 = 6.0 / 7.0;
        rep.purity = 0.875;
        rep.kendall_overall = 1.0;
        rep.kendall_group_0 = 0.5;
        rep.kendall_group_1 = -1.0;
        rep.cosine_similarity = 0.9375;

        std::string txt_path = (dir / "m.txt").string();
        write_metrics_txt(txt_path, rep);
        std::string txt = read_file(txt_path);
        std::vector<std::string> keys;
        std::size_t start = 0;
        while (start < txt.size()) {
            std::size_t sp = txt.find(' ', start), nl = txt.find('\n', start);
            keys.push_back(txt.substr(start, sp - start));
            start = nl + 1;
        }
        CHECK(keys == std::vector<std::string>{"user_precision", "user_recall", "user_f1",
                                               "claim_precision", "claim_recall", "claim_f1",
                                               "purity", "kendall_overall", "kendall_group_0",
                                               "kendall_group_1", "cosine_similarity"});
        CHECK(txt.find("user_recall 0.25\n") != std::string::npos);
        CHECK(txt.find("kendall_group_1 -1\n") != std::string::npos);

        std::string json_path = (dir / "m.json").string();
        write_metrics_json(json_path, rep);
        nlohmann::ordered_json j = nlohmann::ordered_json::parse(read_file(json_path));
        CHECK(j["purity"] == 0.875);
        CHECK(j["user_f1"].get<double>() == 1.0 / 3.0);
        std::vector<std::string> jkeys;
        for (const auto& el : j.items()) jkeys.push_back(el.key());
        CHECK(jkeys == keys);

        // Optional metrics disappear rather than serializing as placeholders.
        rep.kendall_overall.reset();
        rep.kendall_group_0.reset();
        rep.kendall_group_1.reset();
        rep.cosine_similarity.reset();
        write_metrics_txt(txt_path, rep);
        std::string txt2 = read_file(txt_path);
        CHECK(txt2.find("kendall") == std::string::npos);
        CHECK(txt2.find("cosine") == std::string::npos);
    }
    SECTION("writers are byte deterministic") {
        MetricsReport rep;
        rep.user_f1 = 0.1 + 0.2; // not exactly 0.3; %.17g must reproduce it
        std::string a = (dir / "a.txt").string(), b = (dir / "b.txt").string();
        write_metrics_txt(a, rep);
        write_metrics_txt(b, rep);
        CHECK(read_file(a) == read_file(b));
        CHECK(read_file(a).find("user_f1 0.30000000000000004\n") != std::string::npos);
    }
}

TEST_CASE("run configuration loading") {
    fs::path dir = scratch("runcfg");
    fs::create_directories(dir / "inputs");
    std::string edges = put(dir / "inputs", "e.tsv",
                            "user_id\tclaim_id\trelation\tweight\na\tb\tr\t1\n");
    std::string labels = put(dir / "inputs", "l.tsv", "a\tx\n");

    SECTION("a full config parses with paths resolved against its directory") {
        std::string cfg_path = put(dir, "run.json", R"({
            "seed": 17,
            "output_dir": "out",
            "min_degree": 2,
            "dataset": {"edgelist": "inputs/e.tsv"},
            "labels": {"users": "inputs/l.tsv"},
            "model": {"latent_dim": 3, "hidden_dims": [16, 8], "rectified": true},
            "train": {"epochs": 42, "lr_vae": 0.02, "no_tc": true, "pi_kl_set": 0.4},
            "analysis": {"k_axes": 2}
        })");
        RunConfig cfg = load_run_config(cfg_path);
        CHECK(cfg.seed == 17);
        CHECK(cfg.train.seed == 17);
        CHECK(cfg.min_degree == 2);
        CHECK(cfg.dataset == DatasetKind::edgelist);
        CHECK(cfg.edgelist_path == (dir / "inputs" / "e.tsv").string());
        CHECK(cfg.user_labels_path == (dir / "inputs" / "l.tsv").string());
        CHECK(cfg.claim_labels_path.empty());
        CHECK(cfg.output_dir == (dir / "out").string());
        CHECK(cfg.train.model.hidden_dims == std::vector<std::size_t>{16, 8});
        CHECK(cfg.train.epochs == 42);
        CHECK(cfg.train.lr_vae == 0.02);
        CHECK(cfg.train.no_tc);
        CHECK(cfg.train.pi_kl_set == 0.4);
        CHECK(cfg.k_axes == 2);

        std::string echo = cfg.echo_without_paths().dump();
        CHECK(echo.find("e.tsv") == std::string::npos);
        CHECK(echo.find("out") == std::string::npos);
        CHECK(echo.find("\"seed\":17") != std::string::npos);
    }
    SECTION("synthetic and roll-call datasets parse") {
        std::string cfg_path = put(dir, "synth.json", R"({
            "seed": 1,
            "dataset": {"synth": {"users": 10, "claims": 20, "p_in": 0.5, "p_out": 0.1}}
        })");
        RunConfig cfg = load_run_config(cfg_path);
        CHECK(cfg.dataset == DatasetKind::synth);
        CHECK(cfg.synth.users == 10);
        CHECK(cfg.synth.p_out == 0.1);

        std::string members = put(dir / "inputs", "m.csv", "member_id,party\n");
        std::string votes = put(dir / "inputs", "v.csv", "member_id,bill_id,cast\n");
        std::string rc_path = put(dir, "rc.json", R"({
            "seed": 2,
            "dataset": {"rollcall": {"members": "inputs/m.csv", "votes": "inputs/v.csv"}}
        })");
        RunConfig rc = load_run_config(rc_path);
        CHECK(rc.dataset == DatasetKind::rollcall);
        CHECK(rc.rollcall_members_path == members);
        CHECK(rc.rollcall_votes_path == votes);
    }
    SECTION("config mistakes are rejected before any work happens") {
        CHECK_THROWS_MATCHES(load_run_config((dir / "nope.json").string()), ConfigError,
                             Catch::Matchers::MessageMatches(
                                 Catch::Matchers::ContainsSubstring("nope.json")));
        CHECK_THROWS_AS(load_run_config(put(dir, "b1.json", "{ not json")), ConfigError);
        CHECK_THROWS_AS(load_run_config(put(dir, "b2.json", "[]")), ConfigError);
        // seed is mandatory
        CHECK_THROWS_AS(
            load_run_config(put(dir, "b3.json", R"({"dataset": {"synth": {}}})")), ConfigError);
        // unknown keys anywhere
        CHECK_THROWS_MATCHES(
            load_run_config(put(dir, "b4.json",
                                R"({"seed": 1, "dataset": {"synth": {}}, "extra": 1})")),
            ConfigError,
            Catch::Matchers::MessageMatches(Catch::Matchers::ContainsSubstring("extra")));
        CHECK_THROWS_AS(load_run_config(put(dir, "b5.json",
                                            R"({"seed": 1, "dataset": {"synth": {}},
                                                "train": {"epoch": 3}})")),
                        ConfigError);
        CHECK_THROWS_AS(load_run_config(put(dir, "b6.json",
                                            R"({"seed": 1, "dataset": {"synth": {}},
                                                "model": {"latent": 3}})")),
                        ConfigError);
        // exactly one dataset kind
        CHECK_THROWS_AS(
            load_run_config(put(
                dir, "b7.json",
                R"({"seed": 1, "dataset": {"synth": {}, "edgelist": "inputs/e.tsv"}})")),
            ConfigError);
        CHECK_THROWS_AS(load_run_config(put(dir, "b8.json", R"({"seed": 1, "dataset": {}})")),
                        ConfigError);
        // referenced paths must exist
        CHECK_THROWS_MATCHES(
            load_run_config(
                put(dir, "b9.json", R"({"seed": 1, "dataset": {"edgelist": "missing.tsv"}})")),
            ConfigError,
            Catch::Matchers::MessageMatches(Catch::Matchers::ContainsSubstring("missing.tsv")));
        // type errors
        CHECK_THROWS_AS(
            load_run_config(put(dir, "b10.json",
                                R"({"seed": -3, "dataset": {"synth": {}}})")),
            ConfigError);
        CHECK_THROWS_AS(
            load_run_config(put(dir, "b11.json",
                                R"({"seed": 1, "dataset": {"synth": {}},
                                    "train": {"lr_vae": "fast"}})")),
            ConfigError);
        // downstream validation still applies
        CHECK_THROWS_AS(
            load_run_config(put(dir, "b12.json",
                                R"({"seed": 1, "dataset": {"synth": {}},
                                    "model": {"latent_dim": 1}})")),
            ConfigError);
        CHECK_THROWS_AS(
            load_run_config(put(dir, "b13.json",
                                R"({"seed": 1, "dataset": {"synth": {}},
                                    "analysis": {"k_axes": 9}})")),
            ConfigError);
    }
}

TEST_CASE("atomic writes leave no temp files behind") {
    fs::path dir = scratch("atomic");
    std::string path = (dir / "f.txt").string();
    write_file_atomic(path, "one");
    write_file_atomic(path, "two");
    CHECK(read_file(path) == "two");
    std::size_t entries = 0;
    for (const auto& e : fs::directory_iterator(dir)) {
        (void)e;
        ++entries;
    }
    CHECK(entries == 1);
    CHECK_THROWS_AS(write_file_atomic((dir / "no" / "dir" / "f").string(), "x"), IoError);
}
