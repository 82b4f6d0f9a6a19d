// Copyright Contributors to the mvg-eval Project
// SPDX-License-Identifier: Apache-2.0
//
#ifndef MVG_VLM_H
#define MVG_VLM_H

#include <json.hpp>

#include <array>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

namespace mvg {

enum class QuestionKind { Quality, Class, Color, Style };

const char *question_name(QuestionKind kind);
QuestionKind question_from_name(const std::string &name);

struct ReferenceAttributes {
    std::string object_class;
    std::string colors;
    std::string style;

    void validate() const;
};

void to_json(nlohmann::json &j, const ReferenceAttributes &a);
void from_json(const nlohmann::json &j, ReferenceAttributes &a);

/// The three reference questions in the order they are asked: style, class, colors.
std::array<std::string, 3> build_reference_prompts();

std::string build_check_prompt(QuestionKind kind, const ReferenceAttributes &attrs);

/// Leading token of the reply, case-folded with punctuation stripped: "yes" or
/// "no". Anything else is unparsed.
std::optional<bool> parse_verdict(const std::string &reply);

struct VlmVerdict {
    QuestionKind kind = QuestionKind::Quality;
    std::string raw_reply;
    std::optional<bool> verdict;
};

/// One image, one prompt, one reply. Throws TransportError when no reply could
/// be obtained. Implementations must be safe to call from several threads.
class VlmClient {
  public:
    virtual ~VlmClient() = default;
    virtual std::string ask(const std::string &prompt, const std::string &image_path) = 0;
};

struct VlmClientConfig {
    std::string endpoint_url;
    std::string model;
    int max_retries = 2;
    int parallelism = 4;
    /// Name of the environment variable holding the bearer token.
    std::string token_env = "MVG_VLM_TOKEN";
    int timeout_seconds = 120;

    void validate() const;
};

void to_json(nlohmann::json &j, const VlmClientConfig &c);
void from_json(const nlohmann::json &j, VlmClientConfig &c);

/// OpenAI-style chat completions over HTTP(S), temperature 0, the image sent
/// inline as a PNG data URL.
class HttpVlmClient final : public VlmClient {
  public:
    explicit HttpVlmClient(VlmClientConfig config);
    std::string ask(const std::string &prompt, const std::string &image_path) override;

    /// The request body sent for a prompt and encoded image (exposed for tests).
    static nlohmann::json request_body(const std::string &model, const std::string &prompt,
                                       const std::string &png_base64);
    /// Extracts choices[0].message.content; throws ParseError otherwise.
    static std::string reply_text(const std::string &response_body);

  private:
    VlmClientConfig config_;
    std::string origin_;
    std::string path_;
    std::string token_;
};

/// Fixture key: 16 hex digits of FNV-1a over prompt + "\n" + image file name.
std::string prompt_hash(const std::string &prompt, const std::string &image_path);

/// Serves replies from a JSON array of {prompt_hash, reply}. Several entries
/// with one hash are returned in order; the last one repeats once exhausted.
class ReplayVlmClient final : public VlmClient {
  public:
    explicit ReplayVlmClient(const nlohmann::json &fixture);
    static std::unique_ptr<ReplayVlmClient> from_file(const std::string &path);
    std::string ask(const std::string &prompt, const std::string &image_path) override;

  private:
    std::mutex mutex_;
    std::map<std::string, std::vector<std::string>> replies_;
    std::map<std::string, std::size_t> cursor_;
};

/// Forwards to another client and keeps every exchange for a replay fixture.
class RecordingVlmClient final : public VlmClient {
  public:
    explicit RecordingVlmClient(VlmClient &inner) : inner_(inner) {}
    std::string ask(const std::string &prompt, const std::string &image_path) override;
    nlohmann::json fixture() const;
    void save(const std::string &path) const;

  private:
    VlmClient &inner_;
    mutable std::mutex mutex_;
    std::vector<std::pair<std::string, std::string>> log_;
};

struct VlmScores {
    double quality = 0.0;
    double object_class = 0.0;
    double color = 0.0;
    double style = 0.0;
    /// Images with a transport failure on any question; excluded from the
    /// denominators.
    std::vector<std::string> failed_images;
    std::vector<std::string> log;
    bool partial = false;
    int scored_images = 0;

    double get(QuestionKind kind) const;
};

void to_json(nlohmann::json &j, const VlmScores &s);
void from_json(const nlohmann::json &j, VlmScores &s);

/// Asks the four check questions for every image. A reply that does not parse
/// is asked once more; if it still does not parse it counts as "no".
VlmScores vlm_scores(const std::vector<std::string> &image_paths, const ReferenceAttributes &attrs,
                     VlmClient &client, int parallelism = 4);

/// Runs the three reference questions on one image and trims the replies.
ReferenceAttributes query_reference_attributes(VlmClient &client, const std::string &image_path);

} // namespace mvg

#endif // MVG_VLM_H
