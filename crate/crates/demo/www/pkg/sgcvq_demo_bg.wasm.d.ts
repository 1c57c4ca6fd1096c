/* tslint:disable */
/* eslint-disable */
export const memory: WebAssembly.Memory;
export const __wbg_simulation_free: (a: number, b: number) => void;
export const decay_curve: (a: number, b: number, c: number, d: number, e: number) => [number, number];
export const level_weights: (a: number, b: number) => [number, number];
export const simulation_active_fraction: (a: number) => number;
export const simulation_entry_classes: (a: number) => [number, number];
export const simulation_entry_points: (a: number) => [number, number];
export const simulation_label_agreement: (a: number) => number;
export const simulation_new: (a: number, b: number, c: bigint, d: number, e: number, f: number) => [number, number, number];
export const simulation_sample_labels: (a: number) => [number, number];
export const simulation_sample_points: (a: number) => [number, number];
export const simulation_step: (a: number, b: number) => [number, number];
export const simulation_steps_done: (a: number) => bigint;
export const simulation_uniqueness: (a: number, b: number) => number;
export const __wbindgen_externrefs: WebAssembly.Table;
export const __wbindgen_free: (a: number, b: number, c: number) => void;
export const __wbindgen_malloc: (a: number, b: number) => number;
export const __wbindgen_realloc: (a: number, b: number, c: number, d: number) => number;
export const __externref_table_dealloc: (a: number) => void;
export const __wbindgen_start: () => void;
