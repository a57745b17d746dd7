#pragma once

#include <string>

#include "gridcascade/grid_io.hpp"

// Bundled fixtures under data/, generated by `gridcascade synth`.
namespace fixtures {

inline std::string data_path(const std::string& name) { return std::string(GRIDCASCADE_DATA_DIR) + "/" + name; }

// 512 buses, 698 lines, real limits planted at alpha* = 5 (seed 7).
inline const gridcascade::PowerGrid& planted_a5() {
    static const gridcascade::PowerGrid g =
        gridcascade::load_grid(data_path("planted_a5_nodes.csv"), data_path("planted_a5_edges.csv"));
    return g;
}

// Same topology family, heterogeneous log-normal planting (seed 11).
inline const gridcascade::PowerGrid& heterogeneous() {
    static const gridcascade::PowerGrid g =
        gridcascade::load_grid(data_path("heterogeneous_nodes.csv"), data_path("heterogeneous_edges.csv"));
    return g;
}

}  // namespace fixtures
