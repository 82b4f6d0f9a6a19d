// Copyright Contributors to the mvg-eval Project
// SPDX-License-Identifier: Apache-2.0
//
#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <httplib.h>

#include <mvg/vlm.h>

#include <mvg/error.h>
#include <mvg/parallel.h>
#include <mvg/random.h>

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace mvg {

const char *question_name(QuestionKind kind) {
    switch (kind) {
    case QuestionKind::Quality: return "quality";
    case QuestionKind::Class: return "class";
    case QuestionKind::Color: return "color";
    case QuestionKind::Style: return "style";
    }
    return "?";
}

QuestionKind question_from_name(const std::string &name) {
    for (QuestionKind k : {QuestionKind::Quality, QuestionKind::Class, QuestionKind::Color,
                           QuestionKind::Style}) {
        if (name == question_name(k)) return k;
    }
    throw ConfigError("unknown question kind '" + name + "' (expected quality, class, color or style)");
}

void ReferenceAttributes::validate() const {
    if (object_class.empty() || colors.empty() || style.empty()) {
        throw ConfigError("reference attributes need non-empty class, colors and style");
    }
}

void to_json(nlohmann::json &j, const ReferenceAttributes &a) {
    j = {{"class", a.object_class}, {"colors", a.colors}, {"style", a.style}};
}

void from_json(const nlohmann::json &j, ReferenceAttributes &a) {
    a.object_class = j.at("class").get<std::string>();
    a.colors = j.at("colors").get<std::string>();
    a.style = j.at("style").get<std::string>();
}

std::array<std::string, 3> build_reference_prompts() {
    return {
        "Here are images of a daily object, what is the appearance style of this object? Ignore the "
        "background, focus on the appearance, style and design instead of describing the object type, "
        "return the appearance style only and in less than 5 words.",
        "Which object it is? Just return the class name, do not repeat question. Use daily used common "
        "words. If there are multiple possibilities, return like this: classname 1 or classname2 or "
        "classname3...",
        "What is the main color(s) of this object? simply answer the color(s), summarize to less than 4 "
        "colors.",
    };
}

std::string build_check_prompt(QuestionKind kind, const ReferenceAttributes &attrs) {
    switch (kind) {
    case QuestionKind::Quality:
        return "Is this image an overall high-quality image with good overall structure, good visual "
               "quality, nice color harmony, clear object and free of strange artifacts and distortions? "
               "just answer yes or no.";
    case QuestionKind::Class:
        attrs.validate();
        return "Is " + attrs.object_class + " presented in this image? just answer yes or no.";
    case QuestionKind::Color:
        attrs.validate();
        return "Does the object (possibly " + attrs.object_class +
               ") shown in this image have the color(s): " + attrs.colors + "? just answer yes or no.";
    case QuestionKind::Style:
        attrs.validate();
        return "Is the appearance style of the object (possibly " + attrs.object_class +
               "): " + attrs.style + "? just answer yes or no.";
    }
    throw ConfigError("unknown question kind");
}

std::optional<bool> parse_verdict(const std::string &reply) {
    std::string token;
    for (char c : reply) {
        const auto u = static_cast<unsigned char>(c);
        if (std::isalpha(u)) {
            token.push_back(static_cast<char>(std::tolower(u)));
        } else if (std::isspace(u) || std::ispunct(u)) {
            if (!token.empty()) break;
        } else {
            if (!token.empty()) break;
            return std::nullopt;
        }
    }
    if (token == "yes") return true;
    if (token == "no") return false;
    return std::nullopt;
}

// ---------------------------------------------------------------------------
// HTTP client

void VlmClientConfig::validate() const {
    if (endpoint_url.rfind("http://", 0) != 0 && endpoint_url.rfind("https://", 0) != 0) {
        throw ConfigError("VLM endpoint_url must start with http:// or https://");
    }
    if (model.empty()) throw ConfigError("VLM model must be set");
    if (max_retries < 0) throw ConfigError("VLM max_retries must be >= 0");
    if (parallelism < 1) throw ConfigError("VLM parallelism must be >= 1");
}

void to_json(nlohmann::json &j, const VlmClientConfig &c) {
    j = {{"endpoint_url", c.endpoint_url}, {"model", c.model},         {"max_retries", c.max_retries},
         {"parallelism", c.parallelism},   {"token_env", c.token_env}, {"timeout_seconds", c.timeout_seconds}};
}

void from_json(const nlohmann::json &j, VlmClientConfig &c) {
    c.endpoint_url = j.at("endpoint_url").get<std::string>();
    c.model = j.at("model").get<std::string>();
    c.max_retries = j.value("max_retries", c.max_retries);
    c.parallelism = j.value("parallelism", c.parallelism);
    c.token_env = j.value("token_env", c.token_env);
    c.timeout_seconds = j.value("timeout_seconds", c.timeout_seconds);
}

HttpVlmClient::HttpVlmClient(VlmClientConfig config) : config_(std::move(config)) {
    config_.validate();
    const auto scheme_end = config_.endpoint_url.find("://") + 3;
    const auto slash = config_.endpoint_url.find('/', scheme_end);
    origin_ = config_.endpoint_url.substr(0, slash);
    path_ = slash == std::string::npos ? "/v1/chat/completions" : config_.endpoint_url.substr(slash);
    if (const char *tok = std::getenv(config_.token_env.c_str())) token_ = tok;
}

nlohmann::json HttpVlmClient::request_body(const std::string &model, const std::string &prompt,
                                           const std::string &png_base64) {
    nlohmann::json content = nlohmann::json::array();
    content.push_back({{"type", "image_url"},
                       {"image_url", {{"url", "data:image/png;base64," + png_base64}}}});
    content.push_back({{"type", "text"}, {"text", prompt}});
    return {{"model", model},
            {"temperature", 0},
            {"messages", nlohmann::json::array({{{"role", "user"}, {"content", content}}})}};
}

std::string HttpVlmClient::reply_text(const std::string &response_body) {
    try {
        const auto j = nlohmann::json::parse(response_body);
        return j.at("choices").at(0).at("message").at("content").get<std::string>();
    } catch (const nlohmann::json::exception &e) {
        throw ParseError(std::string("unexpected VLM response: ") + e.what());
    }
}

std::string HttpVlmClient::ask(const std::string &prompt, const std::string &image_path) {
    std::ifstream in(image_path, std::ios::binary);
    if (!in) throw TransportError("cannot read image " + image_path);
    std::stringstream bytes;
    bytes << in.rdbuf();
    const std::string body =
        request_body(config_.model, prompt, httplib::detail::base64_encode(bytes.str())).dump();

    std::string last_error;
    for (int attempt = 0; attempt <= config_.max_retries; ++attempt) {
        httplib::Client cli(origin_);
        cli.set_connection_timeout(config_.timeout_seconds);
        cli.set_read_timeout(config_.timeout_seconds);
        if (!token_.empty()) cli.set_bearer_token_auth(token_);
        const auto res = cli.Post(path_, body, "application/json");
        if (!res) {
            last_error = httplib::to_string(res.error());
            continue;
        }
        if (res->status != 200) {
            last_error = "HTTP " + std::to_string(res->status);
            // Client errors will not improve on retry.
            if (res->status >= 400 && res->status < 500 && res->status != 429) break;
            continue;
        }
        try {
            return reply_text(res->body);
        } catch (const ParseError &e) {
            last_error = e.what();
        }
    }
    throw TransportError("VLM request for " + image_path + " failed: " + last_error);
}

// ---------------------------------------------------------------------------
// Record / replay

std::string prompt_hash(const std::string &prompt, const std::string &image_path) {
    const std::string key = prompt + "\n" + std::filesystem::path(image_path).filename().string();
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a(key)));
    return buf;
}

ReplayVlmClient::ReplayVlmClient(const nlohmann::json &fixture) {
    if (!fixture.is_array()) throw ParseError("VLM fixture must be a JSON array");
    for (const auto &e : fixture) {
        replies_[e.at("prompt_hash").get<std::string>()].push_back(e.at("reply").get<std::string>());
    }
}

std::unique_ptr<ReplayVlmClient> ReplayVlmClient::from_file(const std::string &path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open VLM fixture " + path);
    try {
        return std::make_unique<ReplayVlmClient>(nlohmann::json::parse(in));
    } catch (const nlohmann::json::exception &e) {
        throw ParseError(path + ": " + e.what());
    }
}

std::string ReplayVlmClient::ask(const std::string &prompt, const std::string &image_path) {
    const std::string h = prompt_hash(prompt, image_path);
    std::lock_guard lock(mutex_);
    const auto it = replies_.find(h);
    if (it == replies_.end()) {
        throw TransportError("no recorded reply for prompt hash " + h + " (" + image_path + ")");
    }
    std::size_t &c = cursor_[h];
    const std::string &reply = it->second[std::min(c, it->second.size() - 1)];
    ++c;
    return reply;
}

std::string RecordingVlmClient::ask(const std::string &prompt, const std::string &image_path) {
    std::string reply = inner_.ask(prompt, image_path);
    std::lock_guard lock(mutex_);
    log_.emplace_back(prompt_hash(prompt, image_path), reply);
    return reply;
}

nlohmann::json RecordingVlmClient::fixture() const {
    std::lock_guard lock(mutex_);
    nlohmann::json j = nlohmann::json::array();
    for (const auto &[h, r] : log_) j.push_back({{"prompt_hash", h}, {"reply", r}});
    return j;
}

void RecordingVlmClient::save(const std::string &path) const {
    std::ofstream out(path);
    if (!out) throw ConfigError("cannot write VLM fixture " + path);
    out << fixture().dump(2) << "\n";
}

// ---------------------------------------------------------------------------
// Scores

double VlmScores::get(QuestionKind kind) const {
    switch (kind) {
    case QuestionKind::Quality: return quality;
    case QuestionKind::Class: return object_class;
    case QuestionKind::Color: return color;
    case QuestionKind::Style: return style;
    }
    return 0.0;
}

void to_json(nlohmann::json &j, const VlmScores &s) {
    j = {{"quality", s.quality},     {"class", s.object_class}, {"color", s.color},
         {"style", s.style},         {"partial", s.partial},    {"scored_images", s.scored_images},
         {"failed_images", s.failed_images}, {"log", s.log}};
}

void from_json(const nlohmann::json &j, VlmScores &s) {
    s.quality = j.at("quality").get<double>();
    s.object_class = j.at("class").get<double>();
    s.color = j.at("color").get<double>();
    s.style = j.at("style").get<double>();
    s.partial = j.value("partial", false);
    s.scored_images = j.value("scored_images", 0);
    s.failed_images = j.value("failed_images", std::vector<std::string>{});
    s.log = j.value("log", std::vector<std::string>{});
}

namespace {

constexpr QuestionKind kKinds[] = {QuestionKind::Quality, QuestionKind::Class, QuestionKind::Color,
                                   QuestionKind::Style};

struct ImageOutcome {
    bool failed = false;
    std::array<bool, 4> yes{};
    std::vector<std::string> log;
};

} // namespace

VlmScores vlm_scores(const std::vector<std::string> &image_paths, const ReferenceAttributes &attrs,
                     VlmClient &client, int parallelism) {
    if (image_paths.empty()) throw ConfigError("VLM scoring needs at least one image");
    attrs.validate();
    std::vector<ImageOutcome> outcomes(image_paths.size());
    parallel_for(static_cast<int>(image_paths.size()), std::max(1, parallelism), [&](int i) {
        ImageOutcome &o = outcomes[i];
        const std::string &path = image_paths[i];
        try {
            for (std::size_t k = 0; k < 4; ++k) {
                const std::string prompt = build_check_prompt(kKinds[k], attrs);
                std::string reply = client.ask(prompt, path);
                std::optional<bool> v = parse_verdict(reply);
                if (!v) {
                    o.log.push_back(path + " " + question_name(kKinds[k]) + ": unparsed reply '" + reply +
                                    "', retrying");
                    reply = client.ask(prompt, path);
                    v = parse_verdict(reply);
                    if (!v) {
                        o.log.push_back(path + " " + question_name(kKinds[k]) + ": unparsed reply '" +
                                        reply + "', counted as no");
                    }
                }
                o.yes[k] = v.value_or(false);
            }
        } catch (const TransportError &e) {
            o.failed = true;
            o.log.push_back(path + ": " + e.what());
        }
    });

    VlmScores s;
    std::array<int, 4> counts{};
    for (std::size_t i = 0; i < outcomes.size(); ++i) {
        const ImageOutcome &o = outcomes[i];
        s.log.insert(s.log.end(), o.log.begin(), o.log.end());
        if (o.failed) {
            s.failed_images.push_back(image_paths[i]);
            continue;
        }
        ++s.scored_images;
        for (std::size_t k = 0; k < 4; ++k) counts[k] += o.yes[k] ? 1 : 0;
    }
    s.partial = !s.failed_images.empty();
    if (s.scored_images > 0) {
        const double n = s.scored_images;
        s.quality = counts[0] / n;
        s.object_class = counts[1] / n;
        s.color = counts[2] / n;
        s.style = counts[3] / n;
    }
    return s;
}

ReferenceAttributes query_reference_attributes(VlmClient &client, const std::string &image_path) {
    const auto prompts = build_reference_prompts();
    auto trim = [](std::string s) {
        const auto first = s.find_first_not_of(" \t\r\n\"'");
        const auto last = s.find_last_not_of(" \t\r\n\"'.");
        return first == std::string::npos ? std::string() : s.substr(first, last - first + 1);
    };
    ReferenceAttributes a;
    a.style = trim(client.ask(prompts[0], image_path));
    a.object_class = trim(client.ask(prompts[1], image_path));
    a.colors = trim(client.ask(prompts[2], image_path));
    a.validate();
    return a;
}

} // namespace mvg
