/* Minimal consumer of the falign C ABI: trains a small network on the
 * built-in synthetic task and runs the gradient check.
 *
 * Build (from the workspace root, after `cargo build --release -p falign-ffi`):
 *   cc crates/falign-ffi/cexample/train_xor.c \
 *      -Icrates/falign-ffi/include \
 *      target/release/libfalign_ffi.a -lm -lpthread -ldl -o train_xor
 */
#include <stdio.h>

#include "falign.h"

int main(void) {
    printf("falign %s\n", falign_version());

    double worst = 0.0;
    if (falign_gradcheck(0, &worst) != FALIGN_STATUS_OK) {
        fprintf(stderr, "gradcheck failed: %s\n", falign_last_error());
        return 1;
    }
    printf("gradcheck max relative error: %g\n", worst);

    FalignConfig *cfg = falign_config_new();
    falign_config_set_dataset(cfg, FALIGN_DATASET_SYNTHETIC_XOR);
    falign_config_set_rule(cfg, FALIGN_RULE_BP);
    falign_config_set_epochs(cfg, 100);
    falign_config_set_seed(cfg, 7);
    falign_config_set_weight_scale(cfg, 0.5);

    double accuracy = 0.0;
    FalignStatus status = falign_train(cfg, &accuracy);
    falign_config_free(cfg);
    if (status != FALIGN_STATUS_OK) {
        fprintf(stderr, "train failed (%d): %s\n", (int)status, falign_last_error());
        return 1;
    }
    printf("synthetic-xor test accuracy after 100 epochs: %.3f\n", accuracy);
    return 0;
}
