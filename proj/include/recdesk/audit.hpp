#pragma once

#include <fstream>
#include <string>
#include <vector>

#include "recdesk/supervisor.hpp"
#include "recdesk/twin.hpp"

namespace recdesk::audit {

// One observation/decision pair for one building at one step.
struct Record {
    int step = 0;
    std::string ts; // simulated grid time, ISO-8601
    std::string building;
    std::vector<double> observation;
    twin::Action proposed;
    twin::Action vetted;
    std::vector<supervisor::Intervention> interventions;

    bool operator==(const Record&) const = default;
};

std::string to_jsonl(const Record& r);
Record record_from_json(const std::string& line);

// Append-only newline-delimited JSON. Records must arrive in nondecreasing
// step order; I/O failures surface as StorageError immediately.
class Writer {
public:
    explicit Writer(const std::string& path);
    void append(const Record& r);
    void flush();
    int count() const { return count_; }

private:
    std::ofstream out_;
    std::string path_;
    int last_step_ = -1;
    int count_ = 0;
};

std::vector<Record> read_log(const std::string& path);

} // namespace recdesk::audit
