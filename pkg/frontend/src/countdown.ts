// Per-step countdown against the server-broadcast deadline. The server
// clock is authoritative: the client only ever locks itself out earlier,
// never later, so a submit the server would reject is never offered.

export type CountdownState = {
  deadlineEpochMs: number | null
  /** Safety margin subtracted client-side to absorb clock drift + latency. */
  safetyMs: number
}

export function makeCountdown(deadlineEpochMs: number | null, safetyMs = 250): CountdownState {
  return { deadlineEpochMs, safetyMs }
}

export function remainingMs(state: CountdownState, nowMs: number): number | null {
  if (state.deadlineEpochMs === null) return null
  return Math.max(0, state.deadlineEpochMs - nowMs)
}

/** True while the client may still submit for the current scene. */
export function canSubmit(state: CountdownState, nowMs: number): boolean {
  if (state.deadlineEpochMs === null) return true
  return nowMs < state.deadlineEpochMs - state.safetyMs
}

export function formatRemaining(state: CountdownState, nowMs: number): string {
  const ms = remainingMs(state, nowMs)
  if (ms === null) return 'no limit'
  return `${(ms / 1000).toFixed(1)}s`
}
