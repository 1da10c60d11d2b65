#include <stdio.h>
#include <string.h>

#include "eegshield.h"

#define CHECK(call)                                                        \
    do {                                                                   \
        EsStatus s_ = (call);                                              \
        if (s_ != ES_STATUS_OK) {                                          \
            fprintf(stderr, "%s -> %d: %s\n", #call, (int)s_, es_last_error()); \
            return 1;                                                      \
        }                                                                  \
    } while (0)

int main(void) {
    EsSynthConfig cfg = es_synth_config_reference();
    cfg.users = 3;
    cfg.sessions = 2;
    cfg.trials_per_user_per_session = 4;
    cfg.channels = 4;
    cfg.len = 64;

    EsDataset *d = NULL;
    CHECK(es_synth_generate(&cfg, &d));
    EsDims dims;
    CHECK(es_dataset_dims(d, &dims));

    EsUserParams up = es_user_params_default();
    up.m_model = 1;
    up.m_pert = 1;
    EsPerturbation *p = NULL;
    EsDataset *pd = NULL;
    CHECK(es_shield_user(d, &up, &p, &pd));
    EsPerturbationInfo info;
    CHECK(es_perturbation_info(p, &info));

    unsigned preds[4] = {0, 1, 1, 0}, labels[4] = {0, 1, 1, 1};
    double bca = 0;
    CHECK(es_bca(preds, labels, 4, 2, &bca));

    if (es_synth_generate(NULL, &d) != ES_STATUS_NULL_POINTER || es_last_error() == NULL) {
        return 1;
    }
    printf("trials=%zu users=%zu templates=%zu bca=%.4f version=%s\n", dims.trials, dims.users, info.count, bca,
           es_version());

    es_perturbation_free(p);
    es_dataset_free(pd);
    es_dataset_free(d);
    return 0;
}
