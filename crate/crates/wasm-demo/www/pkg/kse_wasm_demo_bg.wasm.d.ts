/* tslint:disable */
/* eslint-disable */
export const memory: WebAssembly.Memory;
export const __wbg_demo_free: (a: number, b: number) => void;
export const demo_actuator: (a: number, b: number) => number;
export const demo_advance: (a: number, b: number) => [number, number];
export const demo_clear_actuators: (a: number) => void;
export const demo_drift_reward: (a: number) => [number, number, number];
export const demo_field: (a: number) => [number, number];
export const demo_forcing: (a: number) => [number, number, number, number];
export const demo_m: (a: number) => number;
export const demo_n: (a: number) => number;
export const demo_new: (a: bigint, b: number) => [number, number, number];
export const demo_set_actuator: (a: number, b: number, c: number) => [number, number];
export const demo_time: (a: number) => number;
export const growth_rates: (a: number) => [number, number];
export const __wbindgen_externrefs: WebAssembly.Table;
export const __externref_table_dealloc: (a: number) => void;
export const __wbindgen_free: (a: number, b: number, c: number) => void;
export const __wbindgen_start: () => void;
