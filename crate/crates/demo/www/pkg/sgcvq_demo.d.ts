/* tslint:disable */
/* eslint-disable */

/**
 * A small engine trained on an 8-class mixture, one batch per `step`.
 */
export class Simulation {
    free(): void;
    [Symbol.dispose](): void;
    active_fraction(): number;
    /**
     * Class of each entry, -1 when unlabeled.
     */
    entry_classes(): Int32Array;
    /**
     * Entry guided slices projected to 2-D, interleaved x, y.
     */
    entry_points(): Float64Array;
    /**
     * Label agreement of the last batch, NaN before the first step.
     */
    label_agreement(): number;
    /**
     * `variant` is `vanilla_ema`, `cvq` or `sgc`; anything else is rejected.
     */
    constructor(variant: string, seed: bigint, separation: number, within_spread: number, detail_spread: number);
    sample_labels(): Int32Array;
    /**
     * Last batch projected to 2-D, interleaved x, y.
     */
    sample_points(): Float64Array;
    /**
     * Trains on `n` more batches.
     */
    step(n: number): void;
    steps_done(): bigint;
    uniqueness(threshold: number): number;
}

/**
 * Reset strength `a` at `points` usage levels evenly spaced over `[0, max_usage]`.
 */
export function decay_curve(codebook_size: number, gamma: number, epsilon: number, max_usage: number, points: number): Float64Array;

/**
 * Level weights for `alpha > 0` and `n >= 2` levels; empty otherwise.
 */
export function level_weights(alpha: number, n: number): Float64Array;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly __wbg_simulation_free: (a: number, b: number) => void;
    readonly decay_curve: (a: number, b: number, c: number, d: number, e: number) => [number, number];
    readonly level_weights: (a: number, b: number) => [number, number];
    readonly simulation_active_fraction: (a: number) => number;
    readonly simulation_entry_classes: (a: number) => [number, number];
    readonly simulation_entry_points: (a: number) => [number, number];
    readonly simulation_label_agreement: (a: number) => number;
    readonly simulation_new: (a: number, b: number, c: bigint, d: number, e: number, f: number) => [number, number, number];
    readonly simulation_sample_labels: (a: number) => [number, number];
    readonly simulation_sample_points: (a: number) => [number, number];
    readonly simulation_step: (a: number, b: number) => [number, number];
    readonly simulation_steps_done: (a: number) => bigint;
    readonly simulation_uniqueness: (a: number, b: number) => number;
    readonly __wbindgen_externrefs: WebAssembly.Table;
    readonly __wbindgen_free: (a: number, b: number, c: number) => void;
    readonly __wbindgen_malloc: (a: number, b: number) => number;
    readonly __wbindgen_realloc: (a: number, b: number, c: number, d: number) => number;
    readonly __externref_table_dealloc: (a: number) => void;
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
