#pragma once

#include <string>
#include <utility>
#include <vector>

namespace passnet {

// Named formation with its nearest-neighbor graph over positions. Graph
// distance (shortest-path length) stands in for spatial distance between
// positions when tracking data is absent.
struct FormationGraph {
    std::string name;
    std::vector<std::string> positions;
    std::vector<std::pair<int, int>> edges;  // undirected, indices into positions

    int position_index(const std::string& label) const;  // -1 if unknown

    // All-pairs shortest-path lengths (BFS per source).
    std::vector<std::vector<int>> distance_matrix() const;

    void validate() const;  // throws on duplicates, dangling edges, disconnection
};

// Built-in formations ("4-4-2", "3-5-2") or a formation file
// (JSON: {"schema": "...", "name": ..., "positions": [...], "edges": [[a,b], ...]}).
FormationGraph load_formation(const std::string& name_or_path);

int graph_distance(const FormationGraph& g, const std::string& a, const std::string& b);

}  // namespace passnet
