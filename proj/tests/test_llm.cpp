#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#ifdef INSTSPEC_HAVE_OPENSSL
#define CPPHTTPLIB_OPENSSL_SUPPORT
#endif
#include "httplib.h"

#include <atomic>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>
#include <thread>

#include "json.hpp"

#include "instspec/llm.hpp"
#include "instspec/prompts.hpp"
#include "instspec/rng.hpp"

using namespace instspec;

namespace {

std::string joined(const std::vector<ChatMessage>& messages) {
    std::string all;
    for (const ChatMessage& m : messages) all += m.content + "\n";
    return all;
}

bool contains(const std::string& haystack, const std::string& needle) {
    return haystack.find(needle) != std::string::npos;
}

std::vector<ChatMessage> a_generation_prompt(OperatorKind op,
                                             const std::vector<HeuristicProgram>& parents) {
    const AnyKey key = ObppSubclassKey{500, WeightDistribution::Uniform,
                                       SequenceType::Random, 100, 0.5};
    return render_generation_prompt(op, parents, describe_subclass(key),
                                    ProblemKind::Obpp);
}

}  // namespace

TEST_CASE("subclass descriptions are deterministic templates") {
    const AnyKey key = ObppSubclassKey{500, WeightDistribution::Uniform,
                                       SequenceType::Random, 100, 0.5};
    const std::string text = describe_subclass(key);
    CHECK(contains(text, "uniform"));
    CHECK(contains(text, "random arrival"));
    CHECK(contains(text, "ratio 0.5"));
    CHECK(describe_subclass(key) == text);

    // Distinct keys produce distinct texts across the whole OBPP grid.
    std::set<std::string> texts;
    for (const auto& k : enumerate_obpp_subclasses()) {
        texts.insert(describe_subclass(AnyKey{k}));
    }
    CHECK(texts.size() == 4500);

    const AnyKey cvrp = CvrpSubclassKey{400, LocationDistribution::Grid,
                                        WeightDistribution::Weibull, 125, 0.7};
    const std::string ctext = describe_subclass(cvrp);
    CHECK(contains(ctext, "grid"));
    CHECK(contains(ctext, "weibull"));
    CHECK(contains(ctext, "ratio 0.7"));

    std::set<std::string> ctexts;
    for (const auto& k : enumerate_cvrp_subclasses()) {
        ctexts.insert(describe_subclass(AnyKey{k}));
    }
    CHECK(ctexts.size() == 675);
}

TEST_CASE("generation prompts carry parents, operator, and binding set") {
    const HeuristicProgram bf = builtin("best_fit");
    const HeuristicProgram ff = builtin("first_fit");

    const auto e2 = a_generation_prompt(OperatorKind::E2, {bf, ff});
    const std::string e2_text = joined(e2);
    CHECK(contains(e2_text, bf.text));
    CHECK(contains(e2_text, ff.text));
    CHECK(contains(e2_text, "[Operation: E2]"));

    const auto m1 = a_generation_prompt(OperatorKind::M1, {bf});
    const std::string m1_text = joined(m1);
    CHECK(contains(m1_text, bf.text));
    CHECK_FALSE(contains(m1_text, ff.text));

    for (const BindingInfo& info : binding_set(ProblemKind::Obpp)) {
        CHECK(contains(m1_text, info.name));
    }

    CHECK_THROWS_AS(a_generation_prompt(OperatorKind::E1, {bf}), std::invalid_argument);
    CHECK_THROWS_AS(a_generation_prompt(OperatorKind::M2, {bf, ff}),
                    std::invalid_argument);
}

TEST_CASE("selection prompts number candidates in the given order") {
    const FeatureVector fv{500, 0, 0, 100, 0.5};
    std::vector<SelectionCandidateView> candidates = {
        {"subclass one", "(-index)", -10.0},
        {"subclass two", "(-(remaining - item))", -11.0},
        {"subclass three", "remaining", -12.0},
    };
    const auto messages = render_selection_prompt(fv, ProblemKind::Obpp, candidates);
    const std::string text = joined(messages);
    CHECK(contains(text, "Candidate 1:"));
    CHECK(contains(text, "Candidate 2:"));
    CHECK(contains(text, "Candidate 3:"));
    CHECK(text.find("subclass one") < text.find("subclass two"));
    CHECK(text.find("subclass two") < text.find("subclass three"));

    const auto one = render_selection_prompt(
        fv, ProblemKind::Obpp, std::vector<SelectionCandidateView>{candidates[0]});
    CHECK(contains(joined(one), "Candidate 1:"));

    CHECK_THROWS_AS(render_selection_prompt(fv, ProblemKind::Obpp,
                                            std::vector<SelectionCandidateView>{}),
                    std::invalid_argument);
}

TEST_CASE("program responses: fenced blocks, prose, and the last-block rule") {
    const auto ok = parse_program_response("Here you go:\n```\n-(remaining-item)\n```",
                                           ProblemKind::Obpp);
    REQUIRE(ok.program.has_value());
    CHECK(ok.program->id == builtin("best_fit").id);
    CHECK(ok.program->description == "Here you go");

    const auto prose = parse_program_response(
        "I am sorry, I cannot produce an expression today.", ProblemKind::Obpp);
    CHECK_FALSE(prose.program.has_value());

    const auto two = parse_program_response(
        "First try:\n```\n-index\n```\nBetter version:\n```\nremaining\n```",
        ProblemKind::Obpp);
    REQUIRE(two.program.has_value());
    CHECK(two.program->text == "remaining");

    // Bare expression without fences still parses.
    const auto bare = parse_program_response("-(remaining - item)", ProblemKind::Obpp);
    REQUIRE(bare.program.has_value());

    // Language-tagged fences are tolerated.
    const auto tagged =
        parse_program_response("```text\n-(remaining - item)\n```", ProblemKind::Obpp);
    REQUIRE(tagged.program.has_value());
}

TEST_CASE("selection responses take the first in-range standalone integer") {
    CHECK(parse_selection_response("I choose 2.", 3) == 2);
    CHECK_FALSE(parse_selection_response("option 5", 3).has_value());
    CHECK(parse_selection_response("1) because it matches the ratio", 3) == 1);
    CHECK(parse_selection_response("Candidate 12 is best", 16) == 12);
    CHECK_FALSE(parse_selection_response("no digits here", 3).has_value());
    CHECK_FALSE(parse_selection_response("3.5 is not standalone", 3).has_value());
    CHECK(parse_selection_response("ratio 0.5 -> candidate 2", 3) == 2);
}

TEST_CASE("mock replies are deterministic and content-keyed") {
    MockLlm mock(17);
    const auto prompt = a_generation_prompt(OperatorKind::M2, {builtin("best_fit")});
    const ChatResult first = mock.complete(prompt);
    const ChatResult second = mock.complete(prompt);
    REQUIRE(first.ok);
    CHECK(first.text == second.text);

    MockLlm other(18);
    CHECK(other.complete(prompt).text != first.text);

    // Retried prompts differ in content, so the content-keyed mock can give
    // them fresh replies.
    const auto retry = render_generation_prompt(
        OperatorKind::M2, std::vector<HeuristicProgram>{builtin("best_fit")},
        "subclass", ProblemKind::Obpp, 2);
    CHECK(joined(retry) != joined(prompt));
}

TEST_CASE("mock operator contracts") {
    MockLlm mock(3);

    // M2 on a constant-free parent: structure preserved, one constant added.
    const auto m2 = mock.complete(a_generation_prompt(OperatorKind::M2,
                                                      {builtin("best_fit")}));
    const auto m2_program = parse_program_response(m2.text, ProblemKind::Obpp);
    REQUIRE(m2_program.program.has_value());
    const ExprPtr& root = m2_program.program->expr;
    REQUIRE(root->kind == Expr::Kind::Binary);
    CHECK(root->bop == BinaryOp::Mul);
    CHECK(structural_equal(root->a, builtin("best_fit").expr));
    CHECK(root->b->kind == Expr::Kind::Const);

    // M3 on a redundant pattern shrinks the tree.
    const ParseResult redundant = parse("min(remaining, remaining)", ProblemKind::Obpp);
    const auto m3 = mock.complete(a_generation_prompt(OperatorKind::M3,
                                                      {*redundant.program}));
    const auto m3_program = parse_program_response(m3.text, ProblemKind::Obpp);
    REQUIRE(m3_program.program.has_value());
    CHECK(expr_size(m3_program.program->expr) < expr_size(redundant.program->expr));

    // E1 offspring differ from both parents, checked over many crossovers.
    Rng rng(12);
    for (int i = 0; i < 1000; ++i) {
        const HeuristicProgram a =
            make_program(ProblemKind::Obpp, random_expr(rng, ProblemKind::Obpp, 4));
        const HeuristicProgram b =
            make_program(ProblemKind::Obpp, random_expr(rng, ProblemKind::Obpp, 4));
        const auto reply = mock.complete(a_generation_prompt(OperatorKind::E1, {a, b}));
        const auto offspring = parse_program_response(reply.text, ProblemKind::Obpp);
        REQUIRE(offspring.program.has_value());
        CHECK(offspring.program->id != a.id);
        CHECK(offspring.program->id != b.id);
    }
}

TEST_CASE("mock selection replies pick the first candidate") {
    MockLlm mock(5);
    const FeatureVector fv{500, 0, 0, 100, 0.5};
    const std::vector<SelectionCandidateView> candidates = {
        {"one", "(-index)", -10.0}, {"two", "remaining", -11.0}};
    const ChatResult reply =
        mock.complete(render_selection_prompt(fv, ProblemKind::Obpp, candidates));
    REQUIRE(reply.ok);
    CHECK(parse_selection_response(reply.text, 2) == 1);
}

TEST_CASE("zero-fault mock always yields parsable replies") {
    MockLlm mock(21);
    Rng rng(22);
    int parsed = 0;
    const int trials = 10000;
    for (int i = 0; i < trials; ++i) {
        const HeuristicProgram parent =
            make_program(ProblemKind::Obpp, random_expr(rng, ProblemKind::Obpp, 4));
        const OperatorKind op = static_cast<OperatorKind>(i % 3 + 2);  // M1..M3
        const auto reply = mock.complete(a_generation_prompt(op, {parent}));
        if (parse_program_response(reply.text, ProblemKind::Obpp).program) ++parsed;
    }
    CHECK(parsed == trials);
}

TEST_CASE("fault-injecting mock hits its configured failure rate") {
    MockLlm mock(31, 0.1);
    Rng rng(32);
    int failures = 0;
    const int trials = 10000;
    for (int i = 0; i < trials; ++i) {
        const HeuristicProgram parent =
            make_program(ProblemKind::Obpp, random_expr(rng, ProblemKind::Obpp, 4));
        // Distinct prompt per trial: the mock keys its failure draw on the
        // message content, so repeated prompts would share one fate.
        const auto prompt = render_generation_prompt(
            OperatorKind::M1, std::vector<HeuristicProgram>{parent},
            "subclass variant " + std::to_string(i), ProblemKind::Obpp);
        const auto reply = mock.complete(prompt);
        if (!parse_program_response(reply.text, ProblemKind::Obpp).program) ++failures;
    }
    const double rate = static_cast<double>(failures) / trials;
    CHECK(rate > 0.08);
    CHECK(rate < 0.12);
}

TEST_CASE("http client speaks the chat-completions protocol") {
    httplib::Server server;
    std::atomic<int> requests{0};
    std::string last_body;
    std::string last_auth;
    std::atomic<int> fail_with{0};  // nonzero: reply once with this status

    server.Post("/v1/chat/completions",
                [&](const httplib::Request& req, httplib::Response& res) {
                    requests.fetch_add(1);
                    last_body = req.body;
                    last_auth = req.get_header_value("Authorization");
                    const int failure = fail_with.exchange(0);
                    if (failure != 0) {
                        res.status = failure;
                        res.set_content("{\"error\":\"induced\"}", "application/json");
                        return;
                    }
                    nlohmann::json reply;
                    reply["choices"] = {{{"message", {{"role", "assistant"},
                                                      {"content", "Rule:\n```\nremaining\n```"}}}}};
                    reply["usage"] = {{"prompt_tokens", 11},
                                     {"completion_tokens", 7},
                                     {"total_tokens", 18}};
                    res.set_content(reply.dump(), "application/json");
                });

    const int port = server.bind_to_any_port("127.0.0.1");
    REQUIRE(port > 0);
    std::thread server_thread([&] { server.listen_after_bind(); });
    server.wait_until_ready();

    namespace fs = std::filesystem;
    const fs::path dir = fs::temp_directory_path() / "instspec_test_http";
    fs::create_directories(dir);

    setenv("INSTSPEC_TEST_KEY", "sekrit-token", 1);
    LlmConfig config;
    config.base_url = "http://127.0.0.1:" + std::to_string(port) + "/v1";
    config.model_name = "test-model";
    config.api_key_env = "INSTSPEC_TEST_KEY";
    config.temperature = 0.25;
    config.timeout_s = 5.0;
    config.max_transport_retries = 2;
    config.transcript_path = (dir / "transcript.jsonl").string();
    HttpLlmClient client(config);

    const std::vector<ChatMessage> messages = {
        {ChatRole::System, "you score bins"}, {ChatRole::User, "propose a rule"}};

    SUBCASE("request and response round-trip") {
        const ChatResult result = client.complete(messages);
        REQUIRE(result.ok);
        CHECK(result.text.find("remaining") != std::string::npos);
        CHECK(result.usage.prompt_tokens == 11);
        CHECK(result.usage.completion_tokens == 7);
        CHECK(result.usage.total_tokens == 18);
        CHECK(requests == 1);
        CHECK(last_auth == "Bearer sekrit-token");

        const nlohmann::json sent = nlohmann::json::parse(last_body);
        CHECK(sent.at("model") == "test-model");
        CHECK(sent.at("temperature").get<double>() == doctest::Approx(0.25));
        REQUIRE(sent.at("messages").size() == 2);
        CHECK(sent["messages"][0]["role"] == "system");
        CHECK(sent["messages"][1]["content"] == "propose a rule");

        // Transcript recorded, bearer token nowhere in it.
        std::ifstream in(config.transcript_path);
        const std::string transcript(std::istreambuf_iterator<char>(in),
                                     std::istreambuf_iterator<char>{});
        CHECK(transcript.find("propose a rule") != std::string::npos);
        CHECK(transcript.find("sekrit-token") == std::string::npos);
    }

    SUBCASE("server errors are retried, client errors are not") {
        fail_with = 503;
        const ChatResult retried = client.complete(messages);
        CHECK(retried.ok);
        CHECK(requests == 2);  // one failure, one retry

        requests = 0;
        fail_with = 400;
        const ChatResult rejected = client.complete(messages);
        CHECK_FALSE(rejected.ok);
        CHECK(rejected.error.find("400") != std::string::npos);
        CHECK(requests == 1);
    }

    server.stop();
    server_thread.join();
    fs::remove_all(dir);
}

TEST_CASE("http client reports unreachable endpoints as transport errors") {
    LlmConfig config;
    config.base_url = "http://127.0.0.1:9/v1";  // discard port: reliably closed
    config.model_name = "test";
    config.timeout_s = 2.0;
    config.max_transport_retries = 0;
    HttpLlmClient client(config);
    const std::vector<ChatMessage> messages = {{ChatRole::User, "hello"}};
    const ChatResult result = client.complete(messages);
    CHECK_FALSE(result.ok);
    CHECK_FALSE(result.error.empty());
}

TEST_CASE("versioned prompt files match the embedded templates") {
    const auto file_matches = [](const std::string& relative, const char* constant) {
        std::ifstream in(std::string(INSTSPEC_SOURCE_DIR) + "/" + relative,
                         std::ios::binary);
        REQUIRE_MESSAGE(in.good(), relative);
        std::string content(std::istreambuf_iterator<char>(in),
                            std::istreambuf_iterator<char>{});
        std::string expected(constant);
        while (!content.empty() && content.back() == '\n') content.pop_back();
        while (!expected.empty() && expected.back() == '\n') expected.pop_back();
        CHECK_MESSAGE(content == expected, relative);
    };
    using namespace instspec::prompts;
    file_matches("data/prompts/generation_system.txt", kGenerationSystem);
    file_matches("data/prompts/generation_user.txt", kGenerationUser);
    file_matches("data/prompts/selection_system.txt", kSelectionSystem);
    file_matches("data/prompts/selection_user.txt", kSelectionUser);
    file_matches("data/prompts/candidate_entry.txt", kCandidateEntry);
    file_matches("data/prompts/operators/init.txt", kOperatorInit);
    file_matches("data/prompts/operators/e1.txt", kOperatorE1);
    file_matches("data/prompts/operators/e2.txt", kOperatorE2);
    file_matches("data/prompts/operators/m1.txt", kOperatorM1);
    file_matches("data/prompts/operators/m2.txt", kOperatorM2);
    file_matches("data/prompts/operators/m3.txt", kOperatorM3);
}

TEST_CASE("response parsers survive fuzzed input") {
    Rng rng(64);
    static const char kAlphabet[] =
        "abcdefghijklmnopqrstuvwxyz0123456789()+-*/.,` \n\t\"'{}[]<>#%^&!?=_";
    for (int i = 0; i < 20000; ++i) {
        std::string text;
        const int length = static_cast<int>(rng.uniform_below(160));
        for (int c = 0; c < length; ++c) {
            text += kAlphabet[rng.uniform_below(sizeof(kAlphabet) - 1)];
        }
        const auto program = parse_program_response(text, ProblemKind::Obpp);
        if (program.program) {
            CHECK(parse(program.program->text, ProblemKind::Obpp).ok());
        }
        (void)parse_selection_response(text, 3);
    }
}
