/* tslint:disable */
/* eslint-disable */

export class Demo {
    free(): void;
    [Symbol.dispose](): void;
    actuator(index: number): number;
    /**
     * Advances `steps` steps under the current actuator amplitudes.
     */
    advance(steps: number): void;
    clear_actuators(): void;
    /**
     * `−‖Φ^dt(u) − u‖` of the current state, unforced.
     */
    drift_reward(): number;
    /**
     * φ on the grid, row-major with x outer.
     */
    field(): Float64Array;
    /**
     * Forcing field of the current amplitudes, same layout as `field`.
     */
    forcing(): Float64Array;
    /**
     * Actuators per side.
     */
    m(): number;
    n(): number;
    /**
     * Default 64² grid, dt = 0.05, starting from relaxed random noise.
     */
    constructor(seed: bigint, relax_steps: number);
    /**
     * Amplitude of actuator `i` (x-center index outer), clamped to ±a_max.
     */
    set_actuator(index: number, amplitude: number): void;
    time(): number;
}

/**
 * Linear growth rate `|k|² − |k|⁴` of mode `(p, 0)` for `p = 0..=p_max`.
 */
export function growth_rates(p_max: number): Float64Array;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly __wbg_demo_free: (a: number, b: number) => void;
    readonly demo_actuator: (a: number, b: number) => number;
    readonly demo_advance: (a: number, b: number) => [number, number];
    readonly demo_clear_actuators: (a: number) => void;
    readonly demo_drift_reward: (a: number) => [number, number, number];
    readonly demo_field: (a: number) => [number, number];
    readonly demo_forcing: (a: number) => [number, number, number, number];
    readonly demo_m: (a: number) => number;
    readonly demo_n: (a: number) => number;
    readonly demo_new: (a: bigint, b: number) => [number, number, number];
    readonly demo_set_actuator: (a: number, b: number, c: number) => [number, number];
    readonly demo_time: (a: number) => number;
    readonly growth_rates: (a: number) => [number, number];
    readonly __wbindgen_externrefs: WebAssembly.Table;
    readonly __externref_table_dealloc: (a: number) => void;
    readonly __wbindgen_free: (a: number, b: number, c: number) => void;
    readonly __wbindgen_start: () => void;
}

export type SyncInitInput = BufferSource | WebAssembly.Module;

/**
 * Instantiates the given `module`, which can either be bytes or
 * a precompiled `WebAssembly.Module`.
 *
 * @param {{ module: SyncInitInput }} module - Passing `SyncInitInput` directly is deprecated.
 *
 * @returns {InitOutput}
 */
export function initSync(module: { module: SyncInitInput } | SyncInitInput): InitOutput;

/**
 * If `module_or_path` is {RequestInfo} or {URL}, makes a request and
 * for everything else, calls `WebAssembly.instantiate` directly.
 *
 * @param {{ module_or_path: InitInput | Promise<InitInput> }} module_or_path - Passing `InitInput` directly is deprecated.
 *
 * @returns {Promise<InitOutput>}
 */
export default function __wbg_init (module_or_path?: { module_or_path: InitInput | Promise<InitInput> } | InitInput | Promise<InitInput>): Promise<InitOutput>;
