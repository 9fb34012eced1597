#pragma once

#include <optional>
#include <string>
#include <vector>

#include "passnet/model.hpp"

namespace passnet {

inline constexpr const char* kEventSchema = "passnet-events-1";

struct ScoreEvent {
    double time = 0.0;  // minutes
    int team = 0;       // 0 = team1, 1 = team2
};

struct MatchEvent {
    int index = 0;              // 1-based pass number within the match
    double holding_time = 0.0;  // minutes, > 0
    int passer = -1;
    int receiver = -1;
    bool success = false;
    // True when this possession did not arise from the previous pass (first
    // event, or restart after a chain break / failure in team-scoped data).
    bool fresh_possession = false;
    double start_x = 0, start_y = 0, end_x = 0, end_y = 0;
    bool air = false;
};

struct MatchLog {
    std::string match_id;
    RosterState roster;
    std::string formation_name;
    double stop_time = 90.0;  // T, minutes
    int initial_holder = -1;
    bool team_scoped = false;  // team2 is an unmodeled opponent sentinel
    std::vector<MatchEvent> events;
    std::vector<ScoreEvent> goals;  // exogenous score timeline

    double total_holding_time() const;
    // Index of the player holding the ball when the match stops, or nullopt
    // when the unmodeled opponent holds it (team-scoped failure at the end).
    std::optional<int> terminal_holder() const;
    // Score (team1 goals, team2 goals) just before `time`.
    std::pair<int, int> score_at(double time) const;
    void validate() const;  // throws with event index on violation
};

// Raw ingestion record, one per CSV / JSON-lines row.
struct RawEventRecord {
    std::string record;  // "meta" | "goal" | "pass"
    std::string match_id;
    std::string formation;
    double stop_time = 0;
    std::string initial_holder;
    bool team_scoped = false;
    std::vector<std::string> team1, team2;
    double time = 0;
    double holding = -1;  // < 0 means absent: derive from inter-event gaps
    std::string passer, receiver;
    bool success = false;
    double start_x = 0, start_y = 0, end_x = 0, end_y = 0;
    bool air = false;
    int goal_team = 0;
};

// Canonical event files. CSV: "#schema" line, fixed header, then meta/goal/pass
// rows per match. The ".jsonl" extension selects the JSON-lines variant.
std::vector<MatchLog> parse_event_log(const std::string& path, bool strict = false);
void write_match_log(const MatchLog& log, const std::string& path);
void write_match_logs(const std::vector<MatchLog>& logs, const std::string& path);

// Descriptive aggregates used by fixtures and reports.
struct PassAggregates {
    long n_passes = 0;
    long n_success = 0;
    double success_proportion() const {
        return n_passes ? static_cast<double>(n_success) / static_cast<double>(n_passes) : 0.0;
    }
};
PassAggregates aggregate_passes(const std::vector<MatchLog>& logs);

}  // namespace passnet
