#pragma once

#include "ldqn/types.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

namespace ldqn {

// One per-master-update trace row; the plot-ready experiment output.
struct TraceRecord {
    std::int64_t t = 0;
    std::int64_t epoch = 0;
    double virtual_time = 0.0;
    int worker_id = 0;
    double suboptimality = std::numeric_limits<double>::quiet_NaN();
    double grad_norm = std::numeric_limits<double>::quiet_NaN();
    double dist_to_opt = std::numeric_limits<double>::quiet_NaN();
};

namespace detail {
inline std::string fmt_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}
}  // namespace detail

inline void write_trace_csv(std::ostream& out, const std::vector<TraceRecord>& rows) {
    out << "t,epoch,virtual_time,worker_id,suboptimality,grad_norm,dist_to_opt\n";
    for (const auto& r : rows) {
        out << r.t << ',' << r.epoch << ',' << detail::fmt_double(r.virtual_time) << ','
            << r.worker_id << ',' << detail::fmt_double(r.suboptimality) << ','
            << detail::fmt_double(r.grad_norm) << ',' << detail::fmt_double(r.dist_to_opt) << '\n';
    }
}

inline std::vector<TraceRecord> read_trace_csv(std::istream& in) {
    std::vector<TraceRecord> rows;
    std::string line;
    if (!std::getline(in, line)) return rows;  // header
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::vector<std::string> fields;
        std::size_t start = 0;
        for (std::size_t pos = 0; pos <= line.size(); ++pos) {
            if (pos == line.size() || line[pos] == ',') {
                fields.push_back(line.substr(start, pos - start));
                start = pos + 1;
            }
        }
        if (fields.size() != 7) throw parse_error(line_no, "malformed trace row");
        TraceRecord r;
        try {
            // stod (unlike stream extraction) accepts nan and inf
            r.t = std::stoll(fields[0]);
            r.epoch = std::stoll(fields[1]);
            r.virtual_time = std::stod(fields[2]);
            r.worker_id = std::stoi(fields[3]);
            r.suboptimality = std::stod(fields[4]);
            r.grad_norm = std::stod(fields[5]);
            r.dist_to_opt = std::stod(fields[6]);
        } catch (const std::exception&) {
            throw parse_error(line_no, "malformed trace row");
        }
        rows.push_back(r);
    }
    return rows;
}

struct RunSummary {
    std::string name;
    std::int64_t epochs_to_tol = -1;   // -1: tolerance never reached
    double vtime_to_tol = -1.0;
    std::int64_t updates_to_tol = -1;
    double final_suboptimality = std::numeric_limits<double>::quiet_NaN();
};

// Aligns traces on suboptimality (they must share an objective and f*):
// epochs / virtual time / updates until the tolerance is first reached.
inline std::vector<RunSummary> compare_runs(const std::vector<std::vector<TraceRecord>>& traces,
                                            const std::vector<std::string>& names, double tol) {
    std::vector<RunSummary> table;
    for (std::size_t k = 0; k < traces.size(); ++k) {
        const auto& rows = traces[k];
        if (rows.empty() || std::isnan(rows.front().suboptimality))
            throw incompatible_traces("trace '" + names.at(k) + "' carries no suboptimality (missing f*)");
        RunSummary s;
        s.name = names.at(k);
        s.final_suboptimality = rows.back().suboptimality;
        for (const auto& r : rows) {
            if (r.suboptimality <= tol) {
                s.epochs_to_tol = r.epoch;
                s.vtime_to_tol = r.virtual_time;
                s.updates_to_tol = r.t;
                break;
            }
        }
        table.push_back(s);
    }
    return table;
}

}  // namespace ldqn
