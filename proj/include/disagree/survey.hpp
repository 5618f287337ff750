#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

#include "disagree/eval.hpp"
#include "disagree/labels.hpp"
#include "disagree/softmax.hpp"

namespace disagree {

enum class Side { A, B };

struct SurveyItem {
    std::string item_id;
    std::string sample_id;
    std::string text;
    AnnotationDistribution dist_a;
    AnnotationDistribution dist_b;
    /// Hidden provenance: the side that shows the baseline (hard-label) model.
    Side baseline_side = Side::A;
};

/// Items shown to every participant, in fixed order. Provenance lives only
/// in the server-side file and never in client payloads.
struct SurveyBundle {
    std::string bundle_id;
    LabelSchema schema;
    std::uint64_t seed = 0;
    std::uint64_t side_seed = 0;
    std::vector<SurveyItem> items;

    const SurveyItem* find(std::string_view item_id) const;

    /// Full server-side document, provenance included.
    nlohmann::ordered_json to_json() const;
    static SurveyBundle from_json(const nlohmann::json& j);
    void save(const std::filesystem::path& path) const;
    static SurveyBundle load(const std::filesystem::path& path);

    /// Wire payload for one item: item_id, text, dist_A, dist_B, labels.
    nlohmann::ordered_json client_item(std::size_t index) const;
};

/// Picks k test samples by a seeded draw without replacement and assigns the
/// baseline model to side A or B by a seeded coin flip per item. The side
/// stream is seeded from `side_seed` when given, otherwise derived from
/// `seed`. Throws InvalidRequest when k exceeds the test split or the models
/// disagree on schema.
SurveyBundle build_bundle(const Corpus& corpus, const SoftmaxClassifier& baseline,
                          const SoftmaxClassifier& multi_label, std::size_t k, std::uint64_t seed,
                          std::optional<std::uint64_t> side_seed = std::nullopt);

enum class Choice { A, B, no_difference };

std::string_view to_string(Choice choice) noexcept;
/// Accepts "A", "B" and "no_difference"; throws InvalidRequest otherwise.
Choice parse_choice(std::string_view token);

struct SurveyResponse {
    std::string participant_id;
    std::string item_id;
    Choice choice = Choice::no_difference;
    std::int64_t timestamp = 0;  // UTC seconds

    nlohmann::ordered_json to_json() const;
    static SurveyResponse from_json(const nlohmann::json& j);

    friend bool operator==(const SurveyResponse&, const SurveyResponse&) = default;
};

/// Append-only JSONL response log. Appends are serialized by a mutex and
/// flushed line by line; an existing file is replayed on open.
class ResponseLog {
public:
    /// Opens (creating if needed) a file-backed log.
    explicit ResponseLog(std::filesystem::path path);
    /// In-memory log, for tests and dry runs.
    ResponseLog() = default;

    /// Throws UnknownItem when the item is not in the bundle and
    /// DuplicateResponse when the participant already answered it.
    void record(const SurveyResponse& response, const SurveyBundle& bundle);

    /// Consistent copy of every accepted response, in append order.
    std::vector<SurveyResponse> snapshot() const;
    bool answered(std::string_view participant, std::string_view item_id) const;
    std::size_t size() const;

    /// Reads a log file without taking ownership of it.
    static std::vector<SurveyResponse> read(const std::filesystem::path& path);

private:
    std::optional<std::filesystem::path> path_;
    mutable std::mutex mutex_;
    std::vector<SurveyResponse> responses_;
    std::set<std::pair<std::string, std::string>, std::less<>> seen_;
};

/// De-blinds every response through the bundle's provenance and counts
/// preferences. Responses for items outside the bundle are ignored.
PreferenceCounts tally(std::span<const SurveyResponse> log, const SurveyBundle& bundle);

// --- HTTP service ----------------------------------------------------------

struct ServiceOptions {
    /// Admin token for GET /api/results; results are refused when empty.
    std::string admin_token;
    /// Directory served statically at "/" (the browser UI), if any.
    std::optional<std::filesystem::path> static_dir;
};

/// HTTP front end:
///   GET  /api/bundle/next?participant=<token>  next unanswered item
///        (a token is issued when the parameter is absent)
///   POST /api/response {participant, item_id, choice}  200 | 400 | 404 | 409
///   GET  /api/results   (header X-Admin-Token or ?token=)  preference report
class SurveyService {
public:
    SurveyService(SurveyBundle bundle, ResponseLog& log, ServiceOptions options = {});
    ~SurveyService();

    SurveyService(const SurveyService&) = delete;
    SurveyService& operator=(const SurveyService&) = delete;

    /// Binds and serves on a background thread; port 0 picks a free port.
    /// Returns the bound port.
    int start(const std::string& host, int port);
    /// Binds and serves on the calling thread until stop().
    void run(const std::string& host, int port);
    void stop();

    /// The JSON body GET /api/results returns.
    nlohmann::ordered_json results() const;

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

}  // namespace disagree
