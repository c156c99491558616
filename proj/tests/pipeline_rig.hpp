#pragma once

// A ready-made gateway wired with all five scripted mock roles, shared by
// the pipeline-level suites.

#include <memory>

#include "picepr/components.hpp"
#include "picepr/mock.hpp"
#include "test_support.hpp"

namespace picepr::testing {

struct PipelineRig {
    Gateway gateway;
    FacetList facets = FacetList::placeholder();
    std::optional<TemplateSet> templates;
    std::shared_ptr<MockTransport> summary, psycho, classify, mimic, embed;
};

inline std::unique_ptr<PipelineRig> make_pipeline_rig(SchemaKind schema, int embed_dim = 16) {
    auto rig = std::make_unique<PipelineRig>();
    rig->templates = TemplateSet::load(templates_dir());

    auto completions = [&](const std::string& name, MockTransport::ContentFn fn) {
        auto mock = std::make_shared<MockTransport>();
        mock->set_generator(std::move(fn));
        BackendDescriptor d;
        d.name = name;
        d.kind = BackendKind::Completions;
        d.output_structure = OutputStructure::Schema;
        d.endpoint = "mock://" + name;
        d.model_id = name + "-model";
        rig->gateway.register_backend(d, mock);
        return mock;
    };
    rig->summary = completions("summary", scripted_summary_generator());
    rig->psycho = completions("psycho", scripted_psycho_generator(rig->facets));
    rig->classify = completions("classify", scripted_classify_generator(schema));
    rig->mimic = completions("mimic", scripted_mimic_generator());

    rig->embed = std::make_shared<MockTransport>();
    rig->embed->set_embed_generator(scripted_embed_generator());
    BackendDescriptor d;
    d.name = "embed";
    d.kind = BackendKind::Embeddings;
    d.output_structure = OutputStructure::Text;
    d.endpoint = "mock://embed";
    d.model_id = "embed-model";
    d.embedding_length = embed_dim;
    rig->gateway.register_backend(d, rig->embed);
    return rig;
}

}  // namespace picepr::testing
