#include "passnet/event_log.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace passnet {

namespace {

// Shortest round-trip decimal representation, identical across platforms.
std::string fmt(double v) {
    char buf[32];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, ptr);
}

double parse_double(const std::string& s, int row) {
    double v{};
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size())
        throw std::runtime_error("row " + std::to_string(row) + ": bad number '" + s + "'");
    return v;
}

std::string join(const std::vector<std::string>& v) {
    std::string out;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (i) out += ';';
        out += v[i];
    }
    return out;
}

std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::string cur;
    for (char ch : s) {
        if (ch == sep) {
            out.push_back(cur);
            cur.clear();
        } else {
            cur += ch;
        }
    }
    out.push_back(cur);
    return out;
}

constexpr const char* kCsvHeader =
    "record,match_id,formation,stop_time,initial_holder,team_scoped,team1,team2,"
    "time,holding,passer,receiver,success,start_x,start_y,end_x,end_y,air,goal_team";

}  // namespace

double MatchLog::total_holding_time() const {
    double total = 0.0;
    for (const auto& e : events) total += e.holding_time;
    return total;
}

std::optional<int> MatchLog::terminal_holder() const {
    if (events.empty()) return initial_holder;
    const MatchEvent& last = events.back();
    if (team_scoped && !last.success) return std::nullopt;
    return last.receiver;
}

std::pair<int, int> MatchLog::score_at(double time) const {
    int g1 = 0, g2 = 0;
    for (const auto& g : goals) {
        if (g.time >= time) break;
        (g.team == 0 ? g1 : g2)++;
    }
    return {g1, g2};
}

void MatchLog::validate() const {
    roster.validate();
    if (stop_time <= 0.0) throw std::invalid_argument("match " + match_id + ": stop_time <= 0");
    if (initial_holder < 0 || initial_holder >= roster.size())
        throw std::invalid_argument("match " + match_id + ": initial holder out of range");
    double total = 0.0;
    for (std::size_t m = 0; m < events.size(); ++m) {
        const MatchEvent& e = events[m];
        const std::string at = "match " + match_id + " event " + std::to_string(m + 1);
        if (!(e.holding_time > 0.0)) throw std::invalid_argument(at + ": holding time must be > 0");
        if (e.passer == e.receiver) throw std::invalid_argument(at + ": receiver equals passer");
        if (e.passer < 0 || e.passer >= roster.size() || e.receiver < 0 || e.receiver >= roster.size())
            throw std::invalid_argument(at + ": player index out of range");
        const bool same_team = roster.team_of(e.passer) == roster.team_of(e.receiver);
        if (e.success != same_team)
            throw std::invalid_argument(at + ": success flag inconsistent with team membership");
        if (m == 0) {
            if (e.passer != initial_holder)
                throw std::invalid_argument(at + ": first passer must be the initial holder");
        } else if (!e.fresh_possession) {
            if (e.passer != events[m - 1].receiver)
                throw std::invalid_argument(at + ": chain condition violated (passer != previous receiver)");
        }
        total += e.holding_time;
    }
    if (total > stop_time * (1.0 + 1e-12) + 1e-9)
        throw std::invalid_argument("match " + match_id + ": holding times exceed stop time");
}

void write_match_logs(const std::vector<MatchLog>& logs, const std::string& path) {
    const bool jsonl = path.size() > 6 && path.substr(path.size() - 6) == ".jsonl";
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path);

    if (!jsonl) out << "#schema " << kEventSchema << "\n" << kCsvHeader << "\n";

    for (const auto& log : logs) {
        log.validate();
        std::vector<std::string> t1, t2;
        for (const auto& p : log.roster.team1) t1.push_back(p.label);
        for (const auto& p : log.roster.team2) t2.push_back(p.label);
        for (const auto& l : t1)
            if (l.find_first_of(",;") != std::string::npos)
                throw std::runtime_error("label '" + l + "' contains a separator character");

        if (jsonl) {
            nlohmann::ordered_json meta{{"schema", kEventSchema},
                                        {"record", "meta"},
                                        {"match_id", log.match_id},
                                        {"formation", log.formation_name},
                                        {"stop_time", log.stop_time},
                                        {"initial_holder", log.roster.label_of(log.initial_holder)},
                                        {"team_scoped", log.team_scoped},
                                        {"team1", t1},
                                        {"team2", t2}};
            out << meta.dump() << "\n";
            for (const auto& g : log.goals)
                out << nlohmann::ordered_json{{"record", "goal"},
                                              {"match_id", log.match_id},
                                              {"time", g.time},
                                              {"goal_team", g.team + 1}}
                           .dump()
                    << "\n";
            double t = 0.0;
            for (const auto& e : log.events) {
                t += e.holding_time;
                out << nlohmann::ordered_json{{"record", "pass"},
                                              {"match_id", log.match_id},
                                              {"time", t},
                                              {"holding", e.holding_time},
                                              {"passer", log.roster.label_of(e.passer)},
                                              {"receiver", log.roster.label_of(e.receiver)},
                                              {"success", e.success ? 1 : 0},
                                              {"start_x", e.start_x},
                                              {"start_y", e.start_y},
                                              {"end_x", e.end_x},
                                              {"end_y", e.end_y},
                                              {"air", e.air ? 1 : 0}}
                           .dump()
                    << "\n";
            }
        } else {
            out << "meta," << log.match_id << ',' << log.formation_name << ',' << fmt(log.stop_time)
                << ',' << log.roster.label_of(log.initial_holder) << ','
                << (log.team_scoped ? 1 : 0) << ',' << join(t1) << ',' << join(t2)
                << ",,,,,,,,,,,\n";
            for (const auto& g : log.goals)
                out << "goal," << log.match_id << ",,,,,,," << fmt(g.time) << ",,,,,,,,,,"
                    << (g.team + 1) << "\n";
            double t = 0.0;
            for (const auto& e : log.events) {
                t += e.holding_time;
                out << "pass," << log.match_id << ",,,,,,," << fmt(t) << ',' << fmt(e.holding_time)
                    << ',' << log.roster.label_of(e.passer) << ',' << log.roster.label_of(e.receiver)
                    << ',' << (e.success ? 1 : 0) << ',' << fmt(e.start_x) << ',' << fmt(e.start_y)
                    << ',' << fmt(e.end_x) << ',' << fmt(e.end_y) << ',' << (e.air ? 1 : 0)
                    << ",\n";
            }
        }
    }
}

void write_match_log(const MatchLog& log, const std::string& path) {
    write_match_logs({log}, path);
}

namespace {

std::vector<RawEventRecord> read_records(const std::string& path) {
    const bool jsonl = path.size() > 6 && path.substr(path.size() - 6) == ".jsonl";
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read " + path);
    std::vector<RawEventRecord> records;
    std::string line;
    int row = 0;
    bool header_seen = false;
    while (std::getline(in, line)) {
        ++row;
        if (line.empty()) continue;
        RawEventRecord r;
        if (jsonl) {
            nlohmann::json j = nlohmann::json::parse(line);
            r.record = j.at("record").get<std::string>();
            r.match_id = j.at("match_id").get<std::string>();
            if (r.record == "meta") {
                if (j.value("schema", std::string(kEventSchema)) != kEventSchema)
                    throw std::runtime_error("row " + std::to_string(row) + ": unsupported schema");
                r.formation = j.at("formation").get<std::string>();
                r.stop_time = j.at("stop_time").get<double>();
                r.initial_holder = j.at("initial_holder").get<std::string>();
                r.team_scoped = j.at("team_scoped").get<bool>();
                r.team1 = j.at("team1").get<std::vector<std::string>>();
                r.team2 = j.at("team2").get<std::vector<std::string>>();
            } else if (r.record == "goal") {
                r.time = j.at("time").get<double>();
                r.goal_team = j.at("goal_team").get<int>();
            } else {
                r.time = j.at("time").get<double>();
                r.holding = j.value("holding", -1.0);
                r.passer = j.at("passer").get<std::string>();
                r.receiver = j.at("receiver").get<std::string>();
                r.success = j.at("success").get<int>() != 0;
                r.start_x = j.value("start_x", 0.0);
                r.start_y = j.value("start_y", 0.0);
                r.end_x = j.value("end_x", 0.0);
                r.end_y = j.value("end_y", 0.0);
                r.air = j.value("air", 0) != 0;
            }
        } else {
            if (line[0] == '#') {
                if (line.rfind("#schema ", 0) == 0 && line != std::string("#schema ") + kEventSchema)
                    throw std::runtime_error("row " + std::to_string(row) + ": unsupported schema");
                continue;
            }
            if (!header_seen) {
                if (line != kCsvHeader)
                    throw std::runtime_error("row " + std::to_string(row) + ": unexpected CSV header");
                header_seen = true;
                continue;
            }
            auto f = split(line, ',');
            if (f.size() != 19)
                throw std::runtime_error("row " + std::to_string(row) + ": expected 19 fields, got " +
                                         std::to_string(f.size()));
            r.record = f[0];
            r.match_id = f[1];
            if (r.record == "meta") {
                r.formation = f[2];
                r.stop_time = parse_double(f[3], row);
                r.initial_holder = f[4];
                r.team_scoped = f[5] == "1";
                r.team1 = split(f[6], ';');
                r.team2 = split(f[7], ';');
            } else if (r.record == "goal") {
                r.time = parse_double(f[8], row);
                r.goal_team = static_cast<int>(parse_double(f[18], row));
            } else if (r.record == "pass") {
                r.time = parse_double(f[8], row);
                r.holding = f[9].empty() ? -1.0 : parse_double(f[9], row);
                r.passer = f[10];
                r.receiver = f[11];
                r.success = f[12] == "1";
                r.start_x = parse_double(f[13], row);
                r.start_y = parse_double(f[14], row);
                r.end_x = parse_double(f[15], row);
                r.end_y = parse_double(f[16], row);
                r.air = f[17] == "1";
            } else {
                throw std::runtime_error("row " + std::to_string(row) + ": unknown record type '" +
                                         r.record + "'");
            }
        }
        records.push_back(std::move(r));
    }
    return records;
}

}  // namespace

std::vector<MatchLog> parse_event_log(const std::string& path, bool strict) {
    auto records = read_records(path);

    std::vector<std::string> match_order;
    std::map<std::string, MatchLog> logs;
    std::map<std::string, std::vector<RawEventRecord>> passes;

    for (auto& r : records) {
        if (logs.find(r.match_id) == logs.end() && r.record != "meta")
            throw std::runtime_error("match " + r.match_id + ": events before meta record");
        if (r.record == "meta") {
            MatchLog log;
            log.match_id = r.match_id;
            log.formation_name = r.formation;
            log.stop_time = r.stop_time;
            log.team_scoped = r.team_scoped;
            log.roster = make_roster(r.team1, r.team2);
            log.initial_holder = log.roster.index_of(r.initial_holder);
            if (log.initial_holder < 0)
                throw std::runtime_error("match " + r.match_id + ": unresolvable initial holder '" +
                                         r.initial_holder + "'");
            match_order.push_back(r.match_id);
            logs[r.match_id] = std::move(log);
        } else if (r.record == "goal") {
            logs[r.match_id].goals.push_back({r.time, r.goal_team - 1});
        } else {
            passes[r.match_id].push_back(std::move(r));
        }
    }

    std::vector<MatchLog> out;
    for (const auto& id : match_order) {
        MatchLog& log = logs[id];
        auto& rows = passes[id];
        std::stable_sort(rows.begin(), rows.end(),
                         [](const RawEventRecord& a, const RawEventRecord& b) { return a.time < b.time; });
        std::sort(log.goals.begin(), log.goals.end(),
                  [](const ScoreEvent& a, const ScoreEvent& b) { return a.time < b.time; });

        double prev_time = 0.0;
        int prev_receiver = log.initial_holder;
        bool prev_success = true;
        for (std::size_t m = 0; m < rows.size(); ++m) {
            auto& r = rows[m];
            if (r.time < 0.0) throw std::runtime_error("match " + id + ": negative timestamp");
            if (m > 0 && r.time <= prev_time) {
                if (r.time < prev_time)
                    throw std::runtime_error("match " + id + ": non-monotone timestamps at pass " +
                                             std::to_string(m + 1));
                // duplicate timestamp: shift by the minimal representable gap
                r.time = std::nextafter(prev_time, std::numeric_limits<double>::infinity());
                std::cerr << "passnet: match " << id << " pass " << m + 1
                          << ": duplicate timestamp shifted\n";
            }
            MatchEvent e;
            e.index = static_cast<int>(m) + 1;
            e.holding_time = r.holding > 0.0 ? r.holding : r.time - prev_time;
            if (!(e.holding_time > 0.0))
                e.holding_time = std::numeric_limits<double>::min();
            e.passer = log.roster.index_of(r.passer);
            e.receiver = log.roster.index_of(r.receiver);
            if (e.passer < 0 || e.receiver < 0)
                throw std::runtime_error("match " + id + " pass " + std::to_string(m + 1) +
                                         ": unresolvable player label");
            e.success = r.success;
            e.start_x = r.start_x;
            e.start_y = r.start_y;
            e.end_x = r.end_x;
            e.end_y = r.end_y;
            e.air = r.air;

            const bool chained = e.passer == prev_receiver &&
                                 (m == 0 || !log.team_scoped || prev_success);
            if (m == 0) {
                e.fresh_possession = false;
                if (e.passer != log.initial_holder)
                    throw std::runtime_error("match " + id + ": first passer differs from initial holder");
            } else if (!chained) {
                if (log.team_scoped && !prev_success) {
                    e.fresh_possession = true;  // opponent possession in between
                } else if (strict) {
                    throw std::runtime_error("match " + id + " pass " + std::to_string(m + 1) +
                                             ": chain break (passer != previous receiver)");
                } else {
                    e.fresh_possession = true;  // new possession segment
                }
            }
            prev_time = r.time;
            prev_receiver = e.receiver;
            prev_success = e.success;
            log.events.push_back(e);
        }
        log.validate();
        out.push_back(std::move(log));
    }
    return out;
}

PassAggregates aggregate_passes(const std::vector<MatchLog>& logs) {
    PassAggregates agg;
    for (const auto& log : logs)
        for (const auto& e : log.events) {
            ++agg.n_passes;
            if (e.success) ++agg.n_success;
        }
    return agg;
}

}  // namespace passnet
