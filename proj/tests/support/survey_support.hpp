#pragma once

#include <httplib.h>

#include <json.hpp>

#include "disagree/softmax.hpp"
#include "disagree/survey.hpp"
#include "disagree/synth.hpp"

namespace survey_support {

/// A bundle of k items drawn from a small synthetic corpus, with quickly
/// trained hard and soft models on either side.
inline disagree::SurveyBundle make_bundle(std::size_t k, std::uint64_t seed = 5)
{
    disagree::SynthConfig synth;
    synth.samples = 200;
    synth.seed = 21;
    const auto corpus = disagree::synthesize(synth);
    disagree::FeatureSpace space;
    space.dimension = 1 << 10;
    disagree::TrainConfig config;
    config.epochs = 3;
    const auto baseline = disagree::train(corpus, space, disagree::TargetKind::hard_majority, config);
    const auto multi = disagree::train(corpus, space, disagree::TargetKind::soft_distribution, config);
    return disagree::build_bundle(corpus, baseline, multi, k, seed);
}

struct ScriptResult {
    disagree::PreferenceCounts expected;  // what the script meant to choose, de-blinded locally
    bool payload_clean = true;            // no item payload leaked provenance
    bool all_accepted = true;
    std::size_t submitted = 0;
};

/// Drives the HTTP API like the browser client would: each participant keeps
/// fetching the next item and answering it until the server reports done.
/// Choices are a deterministic function of participant and position.
inline ScriptResult run_participants(httplib::Client& client, const disagree::SurveyBundle& bundle,
                                     std::size_t participants)
{
    ScriptResult out;
    for (std::size_t p = 0; p < participants; ++p) {
        std::string token;
        for (std::size_t step = 0;; ++step) {
            const auto path = token.empty() ? std::string("/api/bundle/next") : "/api/bundle/next?participant=" + token;
            const auto res = client.Get(path);
            if (!res || res->status != 200) {
                out.all_accepted = false;
                return out;
            }
            const auto body = nlohmann::json::parse(res->body);
            token = body.at("participant").get<std::string>();
            if (body.value("done", false)) break;
            if (step > bundle.items.size()) {
                out.all_accepted = false;
                return out;
            }
            for (const char* forbidden : {"baseline_side", "sample_id", "provenance", "model"})
                if (body.contains(forbidden)) out.payload_clean = false;

            const auto item_id = body.at("item_id").get<std::string>();
            const char* choices[] = {"A", "B", "no_difference"};
            const std::string choice = choices[(p * 7 + step * 3 + p / 5) % 3];
            const auto* item = bundle.find(item_id);
            if (choice == "no_difference") ++out.expected.no_difference;
            else if ((choice == "A") == (item->baseline_side == disagree::Side::A)) ++out.expected.baseline;
            else ++out.expected.multi_label;

            const nlohmann::json submit = {{"participant", token}, {"item_id", item_id}, {"choice", choice}};
            const auto posted = client.Post("/api/response", submit.dump(), "application/json");
            if (!posted || posted->status != 200) out.all_accepted = false;
            ++out.submitted;
        }
    }
    return out;
}

}  // namespace survey_support
