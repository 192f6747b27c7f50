#include "divgen/prompt_engine.hpp"

#include <algorithm>
#include <cctype>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <numeric>
#include <sstream>
#include <thread>
#include <unordered_set>

#include "divgen/rng.hpp"
#include "httplib.h"
#include "json.hpp"

namespace divgen::promptgen {

namespace {

std::string trim(const std::string& s) {
    size_t b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    size_t e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

bool valid_field(const std::string& s) {
    return !s.empty() && s.find('\n') == std::string::npos && s.find('\r') == std::string::npos;
}

bool complete_aspects(const AspectSet& a) {
    return valid_field(a.foreground) && valid_field(a.background) && valid_field(a.lighting) &&
           valid_field(a.camera_angle);
}

const char* kCdPrefix = "a photograph of ";

} // namespace

std::string build_cd_query(const std::string& class_name,
                           const std::optional<similarity::ResolvedMeaning>& meaning,
                           int count_per_query) {
    if (class_name.empty()) raise("EmptyClassName", "class name must be nonempty");
    if (count_per_query < 1) raise("InvalidCount", "count_per_query must be >= 1");

    std::string subject = class_name;
    if (meaning.has_value() && !meaning->chosen.text.empty()) {
        subject += " (" + meaning->chosen.text + ")";
    }

    std::ostringstream q;
    q << "Imagine there is a photo of " << subject
      << ". What foreground and background objects can show up together with it? "
      << "Describe the photo in the following four aspects:\n"
      << " - Foreground\n"
      << " - Background\n"
      << " - Lighting Condition\n"
      << " - Camera Angle\n"
      << "Give " << count_per_query << " descriptions; be creative and avoid repetition. "
      << "Reply with exactly " << count_per_query
      << " entries as a JSON array of objects with the keys "
      << "\"foreground\", \"background\", \"lighting\", \"camera_angle\" and no other text.";
    return q.str();
}

std::vector<AspectSet> parse_aspect_response(const std::string& raw) {
    if (raw.empty()) raise("EmptyResponse", "response text is empty");

    std::vector<AspectSet> out;
    int partial = 0;

    // Primary path: a JSON array somewhere in the response.
    size_t lb = raw.find('[');
    size_t rb = raw.rfind(']');
    if (lb != std::string::npos && rb != std::string::npos && rb > lb) {
        nlohmann::json j = nlohmann::json::parse(raw.substr(lb, rb - lb + 1), nullptr, false);
        if (!j.is_discarded() && j.is_array()) {
            for (const auto& e : j) {
                if (!e.is_object()) {
                    ++partial;
                    continue;
                }
                AspectSet a;
                auto grab = [&](const char* key, std::string& dst) {
                    if (e.contains(key) && e[key].is_string()) dst = trim(e[key].get<std::string>());
                };
                grab("foreground", a.foreground);
                grab("background", a.background);
                grab("lighting", a.lighting);
                grab("camera_angle", a.camera_angle);
                if (complete_aspects(a)) {
                    out.push_back(std::move(a));
                } else {
                    ++partial;
                }
            }
            if (!out.empty()) return out;
        }
    }

    // Fallback: bullet form, one labeled line per aspect.
    AspectSet cur;
    bool started = false;
    auto flush = [&]() {
        if (!started) return;
        if (complete_aspects(cur)) {
            out.push_back(cur);
        } else {
            ++partial;
        }
        cur = AspectSet{};
        started = false;
    };
    std::istringstream lines(raw);
    std::string line;
    auto match_label = [](const std::string& l, const char* label, std::string& value) {
        // Skip bullet glyphs, numbering, and whitespace up to the first
        // ASCII letter.
        size_t i = 0;
        while (i < l.size() && !std::isalpha(static_cast<unsigned char>(l[i]))) ++i;
        if (i == l.size()) return false;
        std::string rest = l.substr(i);
        size_t n = std::strlen(label);
        if (rest.size() < n) return false;
        for (size_t k = 0; k < n; ++k) {
            if (std::tolower(static_cast<unsigned char>(rest[k])) !=
                std::tolower(static_cast<unsigned char>(label[k]))) {
                return false;
            }
        }
        size_t colon = rest.find(':', n);
        if (colon == std::string::npos) return false;
        value = rest.substr(colon + 1);
        return true;
    };
    while (std::getline(lines, line)) {
        std::string v;
        if (match_label(line, "foreground", v)) {
            if (started && !cur.foreground.empty()) flush();
            cur.foreground = trim(v);
            started = true;
        } else if (match_label(line, "background", v)) {
            cur.background = trim(v);
            started = true;
        } else if (match_label(line, "lighting", v)) { // matches "Lighting Condition" too
            cur.lighting = trim(v);
            started = true;
        } else if (match_label(line, "camera", v)) { // "Camera Angle"
            cur.camera_angle = trim(v);
            started = true;
        }
        // Flush as soon as an entry completes so aspect order and
        // missing leading fields in the next entry cannot corrupt it.
        if (started && complete_aspects(cur)) flush();
    }
    flush();

    if (out.empty()) throw NoParsableEntriesError(partial);
    return out;
}

GenerationPrompt assemble_cd_prompt(const std::string& class_id, const AspectSet& aspects) {
    AspectSet a{trim(aspects.foreground), trim(aspects.background), trim(aspects.lighting),
                trim(aspects.camera_angle)};
    if (!complete_aspects(a)) {
        raise("InvalidAspectSet", "all four aspects must be nonempty single-line strings");
    }
    GenerationPrompt p;
    p.class_id = class_id;
    p.kind = PromptKind::CD;
    p.source_aspects = a;
    p.text = std::string(kCdPrefix) + a.foreground + ", " + a.background + ", " + a.lighting +
             ", " + a.camera_angle;
    return p;
}

std::string default_style_file() {
    if (const char* env = std::getenv("DIVGEN_STYLE_FILE")) return env;
#ifdef DIVGEN_DATA_DIR
    return std::string(DIVGEN_DATA_DIR) + "/styles.txt";
#else
    return "data/styles.txt";
#endif
}

std::vector<std::string> load_style_list() { return load_style_list(default_style_file()); }

std::vector<std::string> load_style_list(const std::string& path) {
    std::ifstream in(path);
    if (!in) raise("StyleListCorrupt", "cannot open style list: " + path);
    std::vector<std::string> styles;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        std::string s = trim(line);
        if (!s.empty()) styles.push_back(s);
    }
    if (styles.size() != 60) {
        raise("StyleListCorrupt", path + " holds " + std::to_string(styles.size()) +
                                      " styles, expected 60");
    }
    return styles;
}

std::string render_style_keyword(const std::string& style) {
    if (style.empty()) raise("EmptyStyle", "style keyword must be nonempty");
    bool rest_lower = true;
    for (size_t i = 1; i < style.size(); ++i) {
        if (style[i] >= 'A' && style[i] <= 'Z') {
            rest_lower = false;
            break;
        }
    }
    std::string out = style;
    if (rest_lower && out[0] >= 'A' && out[0] <= 'Z') {
        out[0] = static_cast<char>(out[0] - 'A' + 'a');
    }
    return out;
}

GenerationPrompt apply_style(const GenerationPrompt& cd, const std::string& style) {
    if (cd.kind != PromptKind::CD) raise("NotCdPrompt", "apply_style expects a CD prompt");
    if (style.empty()) raise("EmptyStyle", "style keyword must be nonempty");
    const std::string prefix = kCdPrefix;
    if (cd.text.rfind(prefix, 0) != 0) {
        raise("NotCdPrompt", "CD prompt text does not start with \"" + prefix + "\"");
    }
    std::string body = cd.text.substr(prefix.size());
    std::string keyword = render_style_keyword(style);
    char first = keyword[0];
    bool vowel = first == 'a' || first == 'e' || first == 'i' || first == 'o' || first == 'u' ||
                 first == 'A' || first == 'E' || first == 'I' || first == 'O' || first == 'U';
    GenerationPrompt p = cd;
    p.kind = PromptKind::SD;
    p.style = style;
    p.text = std::string(vowel ? "an " : "a ") + keyword + " of " + body;
    return p;
}

// ── LLM clients ──────────────────────────────────────────────────────

std::string build_chat_request(const LlmHttpConfig& config, const std::string& query) {
    nlohmann::json body = {
        {"model", config.model},
        {"messages", nlohmann::json::array({{{"role", "user"}, {"content", query}}})},
        {"temperature", config.temperature},
        {"max_tokens", config.max_tokens},
    };
    return body.dump();
}

std::string parse_chat_response(const std::string& body) {
    nlohmann::json j = nlohmann::json::parse(body, nullptr, false);
    if (j.is_discarded() || !j.contains("choices") || !j["choices"].is_array() ||
        j["choices"].empty() || !j["choices"][0].contains("message") ||
        !j["choices"][0]["message"].contains("content")) {
        raise("LlmResponseInvalid", "chat response missing choices[0].message.content");
    }
    return j["choices"][0]["message"]["content"].get<std::string>();
}

HttpLlmClient::HttpLlmClient(LlmHttpConfig config) : config_(std::move(config)) {
    if (config_.base_url.empty()) raise("InvalidConfig", "http LLM client needs a base_url");
}

std::string HttpLlmClient::complete(const std::string& query, uint64_t) {
    httplib::Client cli(config_.base_url);
    cli.set_connection_timeout(10);
    cli.set_read_timeout(120);
    httplib::Headers headers;
    if (const char* key = std::getenv("DIVGEN_LLM_KEY")) {
        headers.emplace("Authorization", std::string("Bearer ") + key);
    }
    std::string payload = build_chat_request(config_, query);
    std::string last_error;
    for (int attempt = 0; attempt <= config_.max_retries; ++attempt) {
        auto res = cli.Post("/chat", headers, payload, "application/json");
        if (res && res->status == 200) return parse_chat_response(res->body);
        last_error = res ? "status " + std::to_string(res->status)
                         : "transport: " + httplib::to_string(res.error());
    }
    raise("LlmUnavailable", "chat request failed after " + std::to_string(config_.max_retries + 1) +
                                " attempts (" + last_error + ")");
}

namespace {

// Word banks for the mock. Sizes multiply to 14400 distinct combinations
// per subject, far beyond any single corpus budget, so uniqueness holds
// by construction.
const std::vector<std::string> kFgActivities = {
    "resting on a patch of grass", "caught mid-motion", "seen beside a weathered fence",
    "interacting with its surroundings", "framed by tall reeds", "positioned near a stone wall",
    "half hidden behind foliage", "standing in shallow water", "crossing a dirt path",
    "perched on a wooden post", "surrounded by scattered leaves", "facing the morning breeze",
    "next to an old wooden cart", "under a cluster of lanterns", "close to a mossy boulder",
    "alongside a row of flowerpots", "between two weathered pillars", "in front of a painted mural",
    "moving through drifting mist", "at the edge of a clearing", "beside a rusted bicycle",
    "near a stack of crates", "in the middle of a courtyard", "approaching a shallow stream",
    "set against a tiled rooftop"};

const std::vector<std::string> kBackgrounds = {
    "rolling hills in the distance", "a cluttered workshop bench", "an open market square",
    "dense forest undergrowth", "a row of terraced houses", "wind-swept sand dunes",
    "a calm harbor with moored boats", "snow-dusted pine trees", "a sunflower field in bloom",
    "crumbling brick archways", "a quiet suburban street", "terraced rice paddies"};

const std::vector<std::string> kLighting = {
    "soft morning light", "harsh midday sun", "golden hour glow", "overcast diffuse light",
    "warm indoor lamplight", "cool twilight tones", "dappled light through leaves",
    "dramatic backlighting"};

const std::vector<std::string> kCameraAngles = {"wide shot",      "close-up shot", "low-angle shot",
                                                "overhead shot",  "medium shot",   "panoramic shot"};

const uint64_t kMockCombos = 25ULL * 12ULL * 8ULL * 6ULL; // 14400

std::string extract_subject(const std::string& query) {
    const std::string lead = "Imagine there is a photo of ";
    size_t b = query.find(lead);
    if (b == std::string::npos) return query;
    b += lead.size();
    size_t e = query.find(". What", b);
    if (e == std::string::npos) e = query.size();
    return query.substr(b, e - b);
}

int extract_count(const std::string& query) {
    const std::string lead = "Give ";
    size_t b = query.find(lead);
    if (b == std::string::npos) return 20;
    b += lead.size();
    int n = 0;
    while (b < query.size() && std::isdigit(static_cast<unsigned char>(query[b]))) {
        n = n * 10 + (query[b] - '0');
        ++b;
    }
    return n > 0 ? n : 20;
}

} // namespace

std::vector<AspectSet> MockLlmClient::aspects_for(const std::string& query,
                                                  uint64_t query_index) const {
    std::string subject = extract_subject(query);
    int count = extract_count(query);

    // Seeded affine bijection over the combination space: shuffled
    // appearance, collision-free by construction.
    uint64_t h = fnv1a64(subject, fnv1a64_u64(seed_));
    Rng rng(h);
    uint64_t mult;
    do {
        mult = rng.below(kMockCombos);
    } while (std::gcd(mult, kMockCombos) != 1);
    uint64_t offset = rng.below(kMockCombos);

    std::vector<AspectSet> out;
    out.reserve(static_cast<size_t>(count));
    for (int e = 0; e < count; ++e) {
        uint64_t n = (query_index * static_cast<uint64_t>(count) + static_cast<uint64_t>(e)) %
                     kMockCombos;
        uint64_t m = (n * mult + offset) % kMockCombos;
        uint64_t fg = m % kFgActivities.size();
        m /= kFgActivities.size();
        uint64_t bg = m % kBackgrounds.size();
        m /= kBackgrounds.size();
        uint64_t li = m % kLighting.size();
        m /= kLighting.size();
        uint64_t ca = m % kCameraAngles.size();
        AspectSet a;
        a.foreground = subject + " " + kFgActivities[fg];
        a.background = kBackgrounds[bg];
        a.lighting = kLighting[li];
        a.camera_angle = kCameraAngles[ca];
        out.push_back(std::move(a));
    }
    return out;
}

std::string MockLlmClient::complete(const std::string& query, uint64_t query_index) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& a : aspects_for(query, query_index)) {
        arr.push_back({{"foreground", a.foreground},
                       {"background", a.background},
                       {"lighting", a.lighting},
                       {"camera_angle", a.camera_angle}});
    }
    return arr.dump();
}

PromptCorpus generate_prompt_corpus(const std::string& class_id, const std::string& class_name,
                                    const std::optional<similarity::ResolvedMeaning>& meaning,
                                    LlmClient& client, int target) {
    if (target < 1) raise("InvalidCount", "corpus target must be >= 1");
    const int per_query = 20;
    const int budget = 3 * ((target + per_query - 1) / per_query);
    const std::string query = build_cd_query(class_name, meaning, per_query);

    PromptCorpus corpus;
    corpus.class_id = class_id;
    std::unordered_set<std::string> seen;

    int issued = 0;
    while (static_cast<int>(corpus.cd_prompts.size()) < target && issued < budget) {
        int remaining = target - static_cast<int>(corpus.cd_prompts.size());
        int wave = std::min({std::max(1, client.max_concurrency()), budget - issued,
                             (remaining + per_query - 1) / per_query});

        std::vector<std::string> responses(static_cast<size_t>(wave));
        std::vector<std::exception_ptr> errors(static_cast<size_t>(wave));
        std::vector<std::thread> workers;
        workers.reserve(static_cast<size_t>(wave));
        for (int w = 0; w < wave; ++w) {
            workers.emplace_back([&, w] {
                try {
                    responses[static_cast<size_t>(w)] =
                        client.complete(query, static_cast<uint64_t>(issued + w));
                } catch (...) {
                    errors[static_cast<size_t>(w)] = std::current_exception();
                }
            });
        }
        for (auto& t : workers) t.join();

        // Merge in query-index order so output is independent of
        // completion order.
        for (int w = 0; w < wave; ++w) {
            if (errors[static_cast<size_t>(w)]) {
                try {
                    std::rethrow_exception(errors[static_cast<size_t>(w)]);
                } catch (const NoParsableEntriesError&) {
                    continue; // this response yielded nothing
                }
            }
            std::vector<AspectSet> sets;
            try {
                sets = parse_aspect_response(responses[static_cast<size_t>(w)]);
            } catch (const NoParsableEntriesError&) {
                continue;
            }
            for (const auto& a : sets) {
                if (static_cast<int>(corpus.cd_prompts.size()) >= target) break;
                GenerationPrompt p = assemble_cd_prompt(class_id, a);
                if (seen.insert(p.text).second) corpus.cd_prompts.push_back(std::move(p));
            }
        }
        issued += wave;
    }

    if (static_cast<int>(corpus.cd_prompts.size()) < target) {
        throw CorpusUnderfilledError(static_cast<int>(corpus.cd_prompts.size()), target);
    }
    corpus.styles = load_style_list();
    return corpus;
}

} // namespace divgen::promptgen
