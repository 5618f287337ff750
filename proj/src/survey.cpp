#include "disagree/survey.hpp"

#include <chrono>
#include <fstream>
#include <numeric>
#include <random>
#include <thread>

#include <httplib.h>

#include "disagree/error.hpp"
#include "disagree/rng.hpp"

namespace disagree {

// --- bundle ----------------------------------------------------------------

namespace {

constexpr std::string_view kBundleFormat = "disagree.survey_bundle.v1";
constexpr std::uint64_t kSideStreamSalt = 0x5349444553454544ULL;  // "SIDESEED"

nlohmann::ordered_json dist_json(const AnnotationDistribution& d)
{
    return nlohmann::ordered_json(std::vector<double>(d.probs().begin(), d.probs().end()));
}

std::string_view side_name(Side side) { return side == Side::A ? "A" : "B"; }

}  // namespace

const SurveyItem* SurveyBundle::find(std::string_view item_id) const
{
    for (const auto& item : items)
        if (item.item_id == item_id) return &item;
    return nullptr;
}

nlohmann::ordered_json SurveyBundle::to_json() const
{
    nlohmann::ordered_json j;
    j["format"] = kBundleFormat;
    j["bundle_id"] = bundle_id;
    j["schema"] = {{"task_id", schema.task_id()}, {"labels", schema.labels()}};
    j["seed"] = seed;
    j["side_seed"] = side_seed;
    auto& out = j["items"] = nlohmann::ordered_json::array();
    for (const auto& item : items) {
        out.push_back({{"item_id", item.item_id},
                       {"sample_id", item.sample_id},
                       {"text", item.text},
                       {"dist_A", dist_json(item.dist_a)},
                       {"dist_B", dist_json(item.dist_b)},
                       {"baseline_side", side_name(item.baseline_side)}});
    }
    return j;
}

SurveyBundle SurveyBundle::from_json(const nlohmann::json& j)
{
    if (j.at("format").get<std::string>() != kBundleFormat) throw Error(Errc::FormatError, "unsupported bundle format");
    SurveyBundle bundle{j.at("bundle_id").get<std::string>(),
                        LabelSchema(j.at("schema").at("task_id").get<std::string>(),
                                    j.at("schema").at("labels").get<std::vector<std::string>>()),
                        j.at("seed").get<std::uint64_t>(), j.at("side_seed").get<std::uint64_t>(), {}};
    for (const auto& item : j.at("items")) {
        const auto side = item.at("baseline_side").get<std::string>();
        if (side != "A" && side != "B") throw Error(Errc::FormatError, "baseline_side must be A or B");
        bundle.items.push_back({item.at("item_id").get<std::string>(), item.at("sample_id").get<std::string>(),
                                item.at("text").get<std::string>(),
                                AnnotationDistribution(item.at("dist_A").get<std::vector<double>>()),
                                AnnotationDistribution(item.at("dist_B").get<std::vector<double>>()),
                                side == "A" ? Side::A : Side::B});
    }
    return bundle;
}

void SurveyBundle::save(const std::filesystem::path& path) const
{
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(Errc::IoError, "cannot write " + path.string());
    out << to_json().dump(2) << '\n';
    if (!out) throw Error(Errc::IoError, "failed writing " + path.string());
}

SurveyBundle SurveyBundle::load(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(Errc::IoError, "cannot open " + path.string());
    try {
        return from_json(nlohmann::json::parse(in));
    } catch (const Error& e) {
        throw Error(e.code(), path.string() + ": " + e.message());
    } catch (const nlohmann::json::exception& e) {
        throw Error(Errc::FormatError, path.string() + ": " + e.what());
    }
}

nlohmann::ordered_json SurveyBundle::client_item(std::size_t index) const
{
    const auto& item = items.at(index);
    nlohmann::ordered_json j;
    j["item_id"] = item.item_id;
    j["text"] = item.text;
    j["dist_A"] = dist_json(item.dist_a);
    j["dist_B"] = dist_json(item.dist_b);
    j["labels"] = schema.labels();
    return j;
}

SurveyBundle build_bundle(const Corpus& corpus, const SoftmaxClassifier& baseline, const SoftmaxClassifier& multi_label,
                          std::size_t k, std::uint64_t seed, std::optional<std::uint64_t> side_seed)
{
    if (!(baseline.schema() == multi_label.schema()) || !(baseline.schema() == corpus.schema()))
        throw Error(Errc::InvalidRequest, "baseline, multi-label model and corpus must share one schema");
    if (baseline.conditioned() || multi_label.conditioned())
        throw Error(Errc::InvalidRequest, "survey models must be unconditioned");
    const auto test = corpus.split(Split::test);
    if (k == 0 || k > test.size())
        throw Error(Errc::InvalidRequest, "cannot draw " + std::to_string(k) + " items from a test split of "
                                              + std::to_string(test.size()));

    std::vector<std::size_t> order(test.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    SplitMix64 pick(seed);
    // Partial Fisher-Yates: the first k positions are a uniform draw without replacement.
    for (std::size_t i = 0; i < k; ++i) std::swap(order[i], order[i + pick.below(order.size() - i)]);

    SurveyBundle bundle{"bundle-" + corpus.schema().task_id() + "-" + std::to_string(seed), corpus.schema(), seed,
                        side_seed.value_or(seed ^ kSideStreamSalt), {}};
    SplitMix64 sides(bundle.side_seed);
    for (std::size_t i = 0; i < k; ++i) {
        const AnnotatedSample& sample = *test[order[i]];
        const auto features = featurize(sample.text, baseline.space());
        auto base = predict_distribution(baseline, features);
        auto multi = predict_distribution(multi_label, featurize(sample.text, multi_label.space()));
        const Side baseline_side = (sides.next() >> 63) == 0 ? Side::A : Side::B;
        bundle.items.push_back({"item" + std::to_string(i + 1), sample.sample_id, sample.text,
                                baseline_side == Side::A ? base : multi, baseline_side == Side::A ? multi : base,
                                baseline_side});
    }
    return bundle;
}

// --- responses -------------------------------------------------------------

std::string_view to_string(Choice choice) noexcept
{
    switch (choice) {
    case Choice::A: return "A";
    case Choice::B: return "B";
    case Choice::no_difference: return "no_difference";
    }
    return "no_difference";
}

Choice parse_choice(std::string_view token)
{
    if (token == "A") return Choice::A;
    if (token == "B") return Choice::B;
    if (token == "no_difference") return Choice::no_difference;
    throw Error(Errc::InvalidRequest, "choice must be A, B or no_difference, got '" + std::string(token) + "'");
}

nlohmann::ordered_json SurveyResponse::to_json() const
{
    return {{"participant", participant_id}, {"item_id", item_id}, {"choice", to_string(choice)}, {"timestamp", timestamp}};
}

SurveyResponse SurveyResponse::from_json(const nlohmann::json& j)
{
    return {j.at("participant").get<std::string>(), j.at("item_id").get<std::string>(),
            parse_choice(j.at("choice").get<std::string>()), j.at("timestamp").get<std::int64_t>()};
}

ResponseLog::ResponseLog(std::filesystem::path path) : path_(std::move(path))
{
    if (std::filesystem::exists(*path_)) {
        for (auto& r : read(*path_)) {
            seen_.emplace(r.participant_id, r.item_id);
            responses_.push_back(std::move(r));
        }
    } else {
        std::ofstream create(*path_, std::ios::binary | std::ios::app);
        if (!create) throw Error(Errc::IoError, "cannot create " + path_->string());
    }
}

std::vector<SurveyResponse> ResponseLog::read(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(Errc::IoError, "cannot open " + path.string());
    std::vector<SurveyResponse> out;
    std::string line;
    std::size_t number = 0;
    while (std::getline(in, line)) {
        ++number;
        if (line.empty()) continue;
        try {
            out.push_back(SurveyResponse::from_json(nlohmann::json::parse(line)));
        } catch (const std::exception& e) {
            throw Error(Errc::FormatError, path.string() + " line " + std::to_string(number) + ": " + e.what());
        }
    }
    return out;
}

void ResponseLog::record(const SurveyResponse& response, const SurveyBundle& bundle)
{
    if (!bundle.find(response.item_id)) throw Error(Errc::UnknownItem, "no item '" + response.item_id + "' in the bundle");
    if (response.participant_id.empty()) throw Error(Errc::InvalidRequest, "missing participant token");

    std::lock_guard lock(mutex_);
    if (seen_.contains(std::pair<std::string, std::string>(response.participant_id, response.item_id)))
        throw Error(Errc::DuplicateResponse,
                    "participant '" + response.participant_id + "' already answered '" + response.item_id + "'");
    if (path_) {
        std::ofstream out(*path_, std::ios::binary | std::ios::app);
        out << response.to_json().dump() << '\n';
        out.flush();
        if (!out) throw Error(Errc::IoError, "failed appending to " + path_->string());
    }
    seen_.emplace(response.participant_id, response.item_id);
    responses_.push_back(response);
}

std::vector<SurveyResponse> ResponseLog::snapshot() const
{
    std::lock_guard lock(mutex_);
    return responses_;
}

bool ResponseLog::answered(std::string_view participant, std::string_view item_id) const
{
    std::lock_guard lock(mutex_);
    return seen_.contains(std::pair<std::string, std::string>(participant, item_id));
}

std::size_t ResponseLog::size() const
{
    std::lock_guard lock(mutex_);
    return responses_.size();
}

PreferenceCounts tally(std::span<const SurveyResponse> log, const SurveyBundle& bundle)
{
    PreferenceCounts counts;
    for (const auto& r : log) {
        const SurveyItem* item = bundle.find(r.item_id);
        if (!item) continue;
        if (r.choice == Choice::no_difference) {
            ++counts.no_difference;
            continue;
        }
        const Side chosen = r.choice == Choice::A ? Side::A : Side::B;
        if (chosen == item->baseline_side) ++counts.baseline;
        else ++counts.multi_label;
    }
    return counts;
}

// --- HTTP service ----------------------------------------------------------

struct SurveyService::Impl {
    SurveyBundle bundle;
    ResponseLog& log;
    ServiceOptions options;
    httplib::Server server;
    std::thread worker;
    std::mutex token_mutex;
    std::mt19937_64 token_rng{std::random_device{}()};

    Impl(SurveyBundle b, ResponseLog& l, ServiceOptions o) : bundle(std::move(b)), log(l), options(std::move(o)) {}

    std::string issue_token()
    {
        std::lock_guard lock(token_mutex);
        static constexpr char kHex[] = "0123456789abcdef";
        std::string token = "p-";
        for (int i = 0; i < 16; ++i) token.push_back(kHex[token_rng() & 15]);
        return token;
    }

    static void send_json(httplib::Response& res, int status, const nlohmann::ordered_json& body)
    {
        res.status = status;
        res.set_content(body.dump(), "application/json; charset=utf-8");
    }

    static void send_error(httplib::Response& res, int status, const std::string& code, const std::string& message)
    {
        send_json(res, status, {{"error", code}, {"message", message}});
    }

    nlohmann::ordered_json results() const
    {
        const auto snapshot = log.snapshot();
        const auto counts = tally(snapshot, bundle);
        nlohmann::ordered_json j;
        j["bundle_id"] = bundle.bundle_id;
        j["counts"] = {{"baseline", counts.baseline},
                       {"multi_label", counts.multi_label},
                       {"no_difference", counts.no_difference}};
        j["total"] = counts.total();
        if (counts.total() > 0) {
            const auto result = preference_test(counts);
            j["test"] = result.to_json();
            j["table"] = result.to_table();
        } else {
            j["test"] = nullptr;
        }
        return j;
    }

    void install_routes()
    {
        server.Get("/api/bundle/next", [this](const httplib::Request& req, httplib::Response& res) {
            std::string participant = req.get_param_value("participant");
            if (participant.empty()) participant = issue_token();
            const std::size_t total = bundle.items.size();
            for (std::size_t i = 0; i < total; ++i) {
                if (log.answered(participant, bundle.items[i].item_id)) continue;
                auto body = bundle.client_item(i);
                body["participant"] = participant;
                body["position"] = i + 1;
                body["total"] = total;
                send_json(res, 200, body);
                return;
            }
            send_json(res, 200, {{"participant", participant}, {"done", true}, {"total", total}});
        });

        server.Post("/api/response", [this](const httplib::Request& req, httplib::Response& res) {
            SurveyResponse response;
            try {
                const auto body = nlohmann::json::parse(req.body);
                response.participant_id = body.at("participant").get<std::string>();
                response.item_id = body.at("item_id").get<std::string>();
                response.choice = parse_choice(body.at("choice").get<std::string>());
            } catch (const Error& e) {
                send_error(res, 400, std::string(errc_name(e.code())), e.message());
                return;
            } catch (const std::exception& e) {
                send_error(res, 400, "InvalidRequest", e.what());
                return;
            }
            response.timestamp = std::chrono::duration_cast<std::chrono::seconds>(
                                     std::chrono::system_clock::now().time_since_epoch())
                                     .count();
            try {
                log.record(response, bundle);
            } catch (const Error& e) {
                const int status = e.code() == Errc::DuplicateResponse ? 409
                                 : e.code() == Errc::UnknownItem       ? 404
                                 : e.code() == Errc::InvalidRequest    ? 400
                                                                       : 500;
                send_error(res, status, std::string(errc_name(e.code())), e.message());
                return;
            }
            send_json(res, 200, {{"status", "accepted"}, {"item_id", response.item_id}});
        });

        server.Get("/api/results", [this](const httplib::Request& req, httplib::Response& res) {
            std::string token = req.get_header_value("X-Admin-Token");
            if (token.empty()) token = req.get_param_value("token");
            if (options.admin_token.empty() || token != options.admin_token) {
                send_error(res, 403, "Forbidden", "admin token required");
                return;
            }
            send_json(res, 200, results());
        });

        if (options.static_dir) server.set_mount_point("/", options.static_dir->string());
    }
};

SurveyService::SurveyService(SurveyBundle bundle, ResponseLog& log, ServiceOptions options)
    : impl_(std::make_unique<Impl>(std::move(bundle), log, std::move(options)))
{
    if (impl_->bundle.items.empty()) throw Error(Errc::InvalidRequest, "bundle has no items");
    impl_->install_routes();
}

SurveyService::~SurveyService()
{
    stop();
}

int SurveyService::start(const std::string& host, int port)
{
    const int bound = port == 0 ? impl_->server.bind_to_any_port(host) : (impl_->server.bind_to_port(host, port) ? port : -1);
    if (bound < 0) throw Error(Errc::IoError, "cannot bind " + host + ":" + std::to_string(port));
    impl_->worker = std::thread([this] { impl_->server.listen_after_bind(); });
    impl_->server.wait_until_ready();
    return bound;
}

void SurveyService::run(const std::string& host, int port)
{
    if (!impl_->server.listen(host, port)) throw Error(Errc::IoError, "cannot listen on " + host + ":" + std::to_string(port));
}

void SurveyService::stop()
{
    if (!impl_) return;
    impl_->server.stop();
    if (impl_->worker.joinable()) impl_->worker.join();
}

nlohmann::ordered_json SurveyService::results() const
{
    return impl_->results();
}

}  // namespace disagree
