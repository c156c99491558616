#include "picepr/templates.hpp"

#include <cctype>
#include <fstream>
#include <sstream>

#include "picepr/util.hpp"

namespace picepr {

namespace {

constexpr const char* kGateOpen = "<<gated";
constexpr const char* kGateClose = "<</gated>>";

bool is_placeholder_char(char c) {
    return (c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') || c == '_';
}

// Applies gating: Infer drops gated spans entirely, Train keeps the inner
// text and drops only the markers.
std::string apply_gating(const std::string& text, PromptMode mode) {
    std::string out;
    out.reserve(text.size());
    std::size_t pos = 0;
    while (pos < text.size()) {
        std::size_t open = text.find(kGateOpen, pos);
        if (open == std::string::npos) {
            out.append(text, pos, std::string::npos);
            break;
        }
        std::size_t marker_end = text.find(">>", open);
        if (marker_end == std::string::npos) {
            throw TemplateError("TemplateSyntax", "unterminated gated marker");
        }
        marker_end += 2;
        std::size_t close = text.find(kGateClose, marker_end);
        if (close == std::string::npos) {
            throw TemplateError("TemplateSyntax", "gated region without closing marker");
        }
        out.append(text, pos, open - pos);
        if (mode == PromptMode::Train) {
            out.append(text, marker_end, close - marker_end);
        }
        pos = close + std::string(kGateClose).size();
    }
    return out;
}

}  // namespace

std::set<std::string> scan_placeholders(const std::string& text) {
    std::set<std::string> found;
    for (std::size_t i = 0; i < text.size(); ++i) {
        if (text[i] != '{') continue;
        std::size_t j = i + 1;
        if (j >= text.size() || !(text[j] >= 'a' && text[j] <= 'z')) continue;
        while (j < text.size() && is_placeholder_char(text[j])) ++j;
        if (j < text.size() && text[j] == '}' && j > i + 1) {
            found.insert(text.substr(i + 1, j - i - 1));
            i = j;
        }
    }
    return found;
}

std::string render_template_text(const std::string& text, PromptMode mode,
                                 const std::map<std::string, std::string>& values) {
    std::string gated = apply_gating(text, mode);
    std::string out;
    out.reserve(gated.size());
    for (std::size_t i = 0; i < gated.size(); ++i) {
        if (gated[i] == '{') {
            std::size_t j = i + 1;
            if (j < gated.size() && gated[j] >= 'a' && gated[j] <= 'z') {
                while (j < gated.size() && is_placeholder_char(gated[j])) ++j;
                if (j < gated.size() && gated[j] == '}') {
                    std::string name = gated.substr(i + 1, j - i - 1);
                    auto it = values.find(name);
                    if (it == values.end()) {
                        throw TemplateError("UnboundPlaceholder",
                                            "no value for placeholder '" + name + "'");
                    }
                    out += it->second;
                    i = j;
                    continue;
                }
            }
        }
        out.push_back(gated[i]);
    }
    return out;
}

PromptTemplate PromptTemplate::from_strings(std::string name, std::string system, std::string user,
                                            const std::set<std::string>& declared) {
    PromptTemplate tmpl;
    tmpl.name = std::move(name);
    tmpl.system = std::move(system);
    tmpl.user = std::move(user);
    tmpl.placeholders = declared;
    for (const auto& section : {tmpl.system, tmpl.user}) {
        for (const auto& ph : scan_placeholders(section)) {
            if (!declared.count(ph)) {
                throw TemplateError("UndeclaredPlaceholder", "template '" + tmpl.name +
                                                                 "' uses undeclared placeholder '" +
                                                                 ph + "'");
            }
        }
        apply_gating(section, PromptMode::Infer);  // validates marker pairing
    }
    return tmpl;
}

PromptTemplate PromptTemplate::load(const std::filesystem::path& path,
                                    const std::set<std::string>& declared) {
    std::ifstream in(path);
    if (!in) {
        throw TemplateError("TemplateMissing", "cannot open template: " + path.string());
    }
    std::string line;
    std::string system;
    std::string user;
    std::string* target = nullptr;
    while (std::getline(in, line)) {
        std::string marker = trim(line);
        if (marker == "[system]") {
            target = &system;
            continue;
        }
        if (marker == "[user]") {
            target = &user;
            continue;
        }
        if (!target) {
            if (marker.empty() || marker.front() == '#') continue;
            throw TemplateError("TemplateSyntax",
                                "content before [system]/[user] in " + path.string());
        }
        *target += line;
        *target += '\n';
    }
    if (system.empty() && user.empty()) {
        throw TemplateError("TemplateSyntax", "template has no sections: " + path.string());
    }
    return from_strings(path.stem().string(), trim(system), trim(user), declared);
}

}  // namespace picepr
