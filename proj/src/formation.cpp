#include "passnet/formation.hpp"

#include <deque>
#include <filesystem>
#include <fstream>
#include <set>
#include <stdexcept>

#include <json.hpp>

namespace passnet {

namespace {

FormationGraph builtin_442() {
    FormationGraph g;
    g.name = "4-4-2";
    g.positions = {"GK", "LB", "LCB", "RCB", "RB", "LW", "LCMF", "RCMF", "RW", "SS", "CF"};
    auto e = [&](const char* a, const char* b) {
        g.edges.emplace_back(g.position_index(a), g.position_index(b));
    };
    e("GK", "LCB"); e("GK", "RCB");
    e("LB", "LCB"); e("LCB", "RCB"); e("RCB", "RB");
    e("LB", "LW"); e("LCB", "LCMF"); e("RCB", "RCMF"); e("RB", "RW");
    e("LW", "LCMF"); e("LCMF", "RCMF"); e("RCMF", "RW");
    e("LW", "SS"); e("LCMF", "SS"); e("RCMF", "CF"); e("RW", "CF");
    e("SS", "CF");
    return g;
}

FormationGraph builtin_352() {
    FormationGraph g;
    g.name = "3-5-2";
    g.positions = {"GK", "LCB3", "CB", "RCB3", "LWB", "LCMF3", "DMF", "RCMF3", "RWB", "SS", "CF"};
    auto e = [&](const char* a, const char* b) {
        g.edges.emplace_back(g.position_index(a), g.position_index(b));
    };
    e("GK", "LCB3"); e("GK", "CB"); e("GK", "RCB3");
    e("LCB3", "CB"); e("CB", "RCB3");
    e("LCB3", "LWB"); e("RCB3", "RWB"); e("CB", "DMF");
    e("LWB", "LCMF3"); e("LCMF3", "DMF"); e("DMF", "RCMF3"); e("RCMF3", "RWB");
    e("LCMF3", "SS"); e("RCMF3", "CF");
    e("SS", "CF");
    return g;
}

}  // namespace

int FormationGraph::position_index(const std::string& label) const {
    for (std::size_t i = 0; i < positions.size(); ++i)
        if (positions[i] == label) return static_cast<int>(i);
    return -1;
}

std::vector<std::vector<int>> FormationGraph::distance_matrix() const {
    const int n = static_cast<int>(positions.size());
    std::vector<std::vector<int>> adj(n);
    for (auto [a, b] : edges) {
        adj[a].push_back(b);
        adj[b].push_back(a);
    }
    std::vector<std::vector<int>> dist(n, std::vector<int>(n, -1));
    for (int s = 0; s < n; ++s) {
        std::deque<int> queue{s};
        dist[s][s] = 0;
        while (!queue.empty()) {
            int v = queue.front();
            queue.pop_front();
            for (int w : adj[v]) {
                if (dist[s][w] < 0) {
                    dist[s][w] = dist[s][v] + 1;
                    queue.push_back(w);
                }
            }
        }
    }
    return dist;
}

void FormationGraph::validate() const {
    const int n = static_cast<int>(positions.size());
    if (n == 0) throw std::invalid_argument("formation '" + name + "': no positions");
    std::set<std::string> seen(positions.begin(), positions.end());
    if (static_cast<int>(seen.size()) != n)
        throw std::invalid_argument("formation '" + name + "': duplicate position labels");
    for (auto [a, b] : edges)
        if (a < 0 || a >= n || b < 0 || b >= n || a == b)
            throw std::invalid_argument("formation '" + name + "': edge references unknown position");
    auto dist = distance_matrix();
    for (int j = 0; j < n; ++j)
        if (dist[0][j] < 0)
            throw std::invalid_argument("formation '" + name + "': graph is disconnected at " +
                                        positions[j]);
}

FormationGraph load_formation(const std::string& name_or_path) {
    if (name_or_path == "4-4-2") {
        auto g = builtin_442();
        g.validate();
        return g;
    }
    if (name_or_path == "3-5-2") {
        auto g = builtin_352();
        g.validate();
        return g;
    }
    if (!std::filesystem::exists(name_or_path))
        throw std::invalid_argument("unknown formation '" + name_or_path +
                                    "' (not a built-in, not a file)");
    std::ifstream in(name_or_path);
    nlohmann::json j;
    in >> j;
    FormationGraph g;
    g.name = j.at("name").get<std::string>();
    g.positions = j.at("positions").get<std::vector<std::string>>();
    for (const auto& edge : j.at("edges")) {
        if (edge.size() != 2) throw std::invalid_argument("formation file: edge must have 2 entries");
        int a, b;
        if (edge[0].is_string()) {
            a = g.position_index(edge[0].get<std::string>());
            b = g.position_index(edge[1].get<std::string>());
        } else {
            a = edge[0].get<int>();
            b = edge[1].get<int>();
        }
        if (a < 0 || b < 0) throw std::invalid_argument("formation file: edge references unknown position");
        g.edges.emplace_back(a, b);
    }
    g.validate();
    return g;
}

int graph_distance(const FormationGraph& g, const std::string& a, const std::string& b) {
    const int ia = g.position_index(a), ib = g.position_index(b);
    if (ia < 0) throw std::invalid_argument("graph_distance: unknown position '" + a + "'");
    if (ib < 0) throw std::invalid_argument("graph_distance: unknown position '" + b + "'");
    return g.distance_matrix()[ia][ib];
}

}  // namespace passnet
