#pragma once
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "divgen/error.hpp"
#include "divgen/similarity.hpp"

namespace divgen::promptgen {

// The four-aspect description an LLM returns for one image idea.
struct AspectSet {
    std::string foreground;
    std::string background;
    std::string lighting;
    std::string camera_angle;
};

enum class PromptKind { CD, SD };

inline const char* kind_name(PromptKind k) { return k == PromptKind::CD ? "cd" : "sd"; }

struct GenerationPrompt {
    std::string class_id;
    PromptKind kind = PromptKind::CD;
    std::string style; // nonempty iff kind == SD
    std::string text;
    AspectSet source_aspects;
};

class NoParsableEntriesError : public Error {
public:
    explicit NoParsableEntriesError(int partial_entries)
        : Error("NoParsableEntries",
                "no complete aspect sets recovered (" + std::to_string(partial_entries) +
                    " partial)"),
          partial_entries(partial_entries) {}
    int partial_entries;
};

class CorpusUnderfilledError : public Error {
public:
    CorpusUnderfilledError(int achieved, int target)
        : Error("CorpusUnderfilled", "accumulated " + std::to_string(achieved) + " of " +
                                         std::to_string(target) + " unique prompts"),
          achieved(achieved) {}
    int achieved;
};

// LLM contract. query_index distinguishes repeated submissions of the
// same query text; the HTTP client ignores it, the mock folds it into
// its seed so every call is a pure function of (seed, query, index).
class LlmClient {
public:
    virtual ~LlmClient() = default;
    virtual std::string complete(const std::string& query, uint64_t query_index) = 0;
    virtual int max_concurrency() const { return 1; }
};

struct LlmHttpConfig {
    std::string base_url;
    std::string model = "gpt-3.5-turbo";
    double temperature = 0.75;
    int max_tokens = 4096;
    int max_retries = 3;
    int concurrency = 1;
};

// POST {base_url}/chat with {model, messages, temperature, max_tokens};
// bearer token read from DIVGEN_LLM_KEY when present.
class HttpLlmClient : public LlmClient {
public:
    explicit HttpLlmClient(LlmHttpConfig config);
    std::string complete(const std::string& query, uint64_t query_index) override;
    int max_concurrency() const override { return config_.concurrency; }

private:
    LlmHttpConfig config_;
};

// Pure-function request/response codecs for the chat wire format,
// shared by the client and its tests.
std::string build_chat_request(const LlmHttpConfig& config, const std::string& query);
std::string parse_chat_response(const std::string& body);

// Deterministic stand-in for the LLM: fills the four aspects from
// seeded word banks keyed by the queried subject. Distinct
// (query_index, entry) pairs always yield distinct aspect sets.
class MockLlmClient : public LlmClient {
public:
    explicit MockLlmClient(uint64_t seed, int concurrency = 1)
        : seed_(seed), concurrency_(concurrency) {}

    std::string complete(const std::string& query, uint64_t query_index) override;
    int max_concurrency() const override { return concurrency_; }

    // The exact aspect sets complete() embeds for this query, for
    // round-trip checks.
    std::vector<AspectSet> aspects_for(const std::string& query, uint64_t query_index) const;

private:
    uint64_t seed_;
    int concurrency_;
};

struct PromptCorpus {
    std::string class_id;
    std::vector<GenerationPrompt> cd_prompts; // exact-string deduplicated
    std::vector<std::string> styles;          // the 60 canonical styles
};

// The four-aspect LLM query. Inserts "{name} ({meaning})" when a
// resolved meaning is supplied and asks for exactly count_per_query
// machine-parseable entries.
std::string build_cd_query(const std::string& class_name,
                           const std::optional<similarity::ResolvedMeaning>& meaning,
                           int count_per_query = 20);

// Primary path: JSON array of four-key objects. Fallback: the bullet
// form ("- Foreground: ..."). Incomplete entries are dropped; zero
// complete entries raises NoParsableEntries with the partial count.
std::vector<AspectSet> parse_aspect_response(const std::string& raw);

// "a photograph of {fg}, {bg}, {lighting}, {angle}"
GenerationPrompt assemble_cd_prompt(const std::string& class_id, const AspectSet& aspects);

// Canonical 60-style list, one per line. The zero-arg form reads the
// file shipped with the artifact (overridable via DIVGEN_STYLE_FILE).
std::vector<std::string> load_style_list();
std::vector<std::string> load_style_list(const std::string& path);
std::string default_style_file();

// Swap the "photograph" keyword for an art style: "a photograph of X"
// becomes "a painting of X" / "an illustration of X" / "a CGI of X".
GenerationPrompt apply_style(const GenerationPrompt& cd, const std::string& style);

// How a style keyword appears inside an SD prompt: leading character is
// lowercased only when the rest of the keyword is already lowercase.
std::string render_style_keyword(const std::string& style);

// Query the client (20 descriptions per query) until `target` unique CD
// prompts accumulate or the budget of 3 * ceil(target/20) queries runs
// out, then attach the canonical style list.
PromptCorpus generate_prompt_corpus(const std::string& class_id, const std::string& class_name,
                                    const std::optional<similarity::ResolvedMeaning>& meaning,
                                    LlmClient& client, int target = 600);

} // namespace divgen::promptgen
