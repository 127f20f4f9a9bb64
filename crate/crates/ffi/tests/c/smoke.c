#include <stdio.h>
#include <string.h>
#include "clothwm.h"

int main(void) {
    ClothwmEnv *env = NULL;
    if (clothwm_env_new("desk", &env) != CLOTHWM_STATUS_OK) return 1;
    size_t a = 0;
    clothwm_env_action_dim(env, &a);
    double action[16] = {0};
    double reward = 0.0, total = 0.0;
    bool done = false;
    for (int t = 0; t < 5 && !done; t++) {
        if (clothwm_env_step(env, action, a, &reward, &done) != CLOTHWM_STATUS_OK) return 2;
        total += reward;
    }
    double state[128];
    if (clothwm_env_state(env, state, 2) != CLOTHWM_STATUS_BUFFER_TOO_SMALL) return 3;
    char msg[256];
    clothwm_last_error(msg, sizeof msg);
    if (strstr(msg, "buf") == NULL) return 4;
    if (clothwm_env_new("nope", NULL) != CLOTHWM_STATUS_NULL_POINTER) return 5;
    clothwm_env_free(env);
    printf("%s %zu %.6f\n", clothwm_status_name(CLOTHWM_STATUS_OK), a, total);
    return 0;
}
